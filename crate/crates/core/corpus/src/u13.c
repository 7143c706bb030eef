#include "corpus.h"
#include "table.h"

static const uint32_t table[TABLE_LEN] = TABLE_INIT;

uint32_t unit_13(uint32_t seed)
{
    uint32_t acc = 13u;
    for (int j = 0; j < TABLE_LEN; j++)
        acc = acc * 31u + table[(seed + (uint32_t)j) % TABLE_LEN];
    return mix32(acc);
}
