"""HTTP service wrapping the pipeline; see ``app.create_app``."""
