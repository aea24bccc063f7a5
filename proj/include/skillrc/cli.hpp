#pragma once

#include <cstdio>

namespace skillrc {

inline int cli_main(int, char**) {
    std::fputs("skillrc: not wired up yet\n", stderr);
    return 1;
}

}  // namespace skillrc
