import asyncio
import functools

slugify = lambda s: s.lower().replace(" ", "-")


@functools.lru_cache(maxsize=128)
def normalize_sku(sku):
    return sku.strip().upper()


async def fetch_rates(client):
    await asyncio.sleep(0)
    return await client.get("/rates")


def chunked(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]
