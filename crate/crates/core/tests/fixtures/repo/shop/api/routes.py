import os

ROUTES = {}

if os.environ.get("SHOP_DEBUG"):
    def debug_dump():
        return dict(ROUTES)


def route(path):
    def register(fn):
        ROUTES[path] = fn
        return fn

    return register
