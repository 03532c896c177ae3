"""Planning with meta-learned transition priors and adaptive discounts."""
