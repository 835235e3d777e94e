from _n2fgan import __version__  # noqa: F401
