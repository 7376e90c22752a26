#include "metahdr/tensor.hpp"

#include <atomic>
#include <sstream>

namespace metahdr {

namespace {
std::atomic<std::uint64_t> g_node_seq{0};
thread_local bool t_grad_enabled = true;
}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::uint64_t next_node_seq() { return ++g_node_seq; }

bool GradMode::enabled() { return t_grad_enabled; }
void GradMode::set_enabled(bool enabled) { t_grad_enabled = enabled; }

}  // namespace metahdr
