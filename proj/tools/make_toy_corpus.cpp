// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>
#include <string>

#include "litesc/text.hpp"

int main(int argc, char** argv) {
    std::string out = "toy_corpus.txt";
    size_t count = 10000;
    uint64_t seed = 20260801;
    if (argc > 1) out = argv[1];
    if (argc > 2) count = std::stoul(argv[2]);
    if (argc > 3) seed = std::stoull(argv[3]);

    auto lines = litesc::generate_toy_corpus(count, seed);
    std::ofstream f(out, std::ios::trunc);
    if (!f) {
        std::cerr << "cannot write " << out << "\n";
        return 1;
    }
    for (const auto& l : lines) f << l << "\n";
    std::cout << "wrote " << lines.size() << " sentences to " << out << "\n";
    return 0;
}
