"""AdaScale-TuRBO toolkit."""
