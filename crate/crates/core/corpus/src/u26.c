#include "corpus.h"

static uint32_t fib(uint32_t n)
{
    return n < 2 ? n : fib(n - 1) + fib(n - 2);
}

uint32_t unit_26(uint32_t seed)
{
    return mix32(fib(seed % 14u) ^ 26u);
}
