from hypothesis import settings

# first calls pay for lazy imports (scipy), which trips per-example deadlines
settings.register_profile("default", deadline=None)
settings.load_profile("default")
