#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fixtures {

inline std::string dir() {
#ifdef CONFLENS_FIXTURE_DIR
    return CONFLENS_FIXTURE_DIR;
#else
    return "tests/fixtures";
#endif
}

inline std::string read(const std::string& name) {
    std::ifstream in(dir() + "/" + name, std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture: " + name);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace fixtures
