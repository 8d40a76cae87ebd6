"""Digital twin, event-driven control pipeline and DRL agents for an induction furnace."""
