#include "corpus.h"

static uint32_t fib(uint32_t n)
{
    return n < 2 ? n : fib(n - 1) + fib(n - 2);
}

uint32_t unit_46(uint32_t seed)
{
    return mix32(fib(seed % 18u) ^ 46u);
}
