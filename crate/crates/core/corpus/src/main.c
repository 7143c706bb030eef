#include <stdio.h>

#include "corpus.h"

int main(void)
{
    uint32_t acc = 1;
    acc = mix32(acc ^ unit_00(acc));
    acc = mix32(acc ^ unit_01(acc));
    acc = mix32(acc ^ unit_02(acc));
    acc = mix32(acc ^ unit_03(acc));
    acc = mix32(acc ^ unit_04(acc));
    acc = mix32(acc ^ unit_05(acc));
    acc = mix32(acc ^ unit_06(acc));
    acc = mix32(acc ^ unit_07(acc));
    acc = mix32(acc ^ unit_08(acc));
    acc = mix32(acc ^ unit_09(acc));
    acc = mix32(acc ^ unit_10(acc));
    acc = mix32(acc ^ unit_11(acc));
    acc = mix32(acc ^ unit_12(acc));
    acc = mix32(acc ^ unit_13(acc));
    acc = mix32(acc ^ unit_14(acc));
    acc = mix32(acc ^ unit_15(acc));
    acc = mix32(acc ^ unit_16(acc));
    acc = mix32(acc ^ unit_17(acc));
    acc = mix32(acc ^ unit_18(acc));
    acc = mix32(acc ^ unit_19(acc));
    acc = mix32(acc ^ unit_20(acc));
    acc = mix32(acc ^ unit_21(acc));
    acc = mix32(acc ^ unit_22(acc));
    acc = mix32(acc ^ unit_23(acc));
    acc = mix32(acc ^ unit_24(acc));
    acc = mix32(acc ^ unit_25(acc));
    acc = mix32(acc ^ unit_26(acc));
    acc = mix32(acc ^ unit_27(acc));
    acc = mix32(acc ^ unit_28(acc));
    acc = mix32(acc ^ unit_29(acc));
    acc = mix32(acc ^ unit_30(acc));
    acc = mix32(acc ^ unit_31(acc));
    acc = mix32(acc ^ unit_32(acc));
    acc = mix32(acc ^ unit_33(acc));
    acc = mix32(acc ^ unit_34(acc));
    acc = mix32(acc ^ unit_35(acc));
    acc = mix32(acc ^ unit_36(acc));
    acc = mix32(acc ^ unit_37(acc));
    acc = mix32(acc ^ unit_38(acc));
    acc = mix32(acc ^ unit_39(acc));
    acc = mix32(acc ^ unit_40(acc));
    acc = mix32(acc ^ unit_41(acc));
    acc = mix32(acc ^ unit_42(acc));
    acc = mix32(acc ^ unit_43(acc));
    acc = mix32(acc ^ unit_44(acc));
    acc = mix32(acc ^ unit_45(acc));
    acc = mix32(acc ^ unit_46(acc));
    acc = mix32(acc ^ unit_47(acc));
    printf("corpus ok %u units %08x\n", CORPUS_UNITS, (unsigned)acc);
    return 0;
}
