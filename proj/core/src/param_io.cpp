#include "metahdr/param_io.hpp"

#include "metahdr/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace metahdr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::uint32_t kMaxNameLength = 256;
constexpr std::uint32_t kMaxTensors = 4096;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

class Input {
public:
    explicit Input(std::istream& is) : is_(is) {}

    void read(void* dst, std::size_t n, const char* what) {
        is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) throw ParseError(std::string("truncated ") + what, pos_);
        pos_ += n;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v = 0;
        read(&v, sizeof v, what);
        return v;
    }
    std::size_t pos() const { return pos_; }

private:
    std::istream& is_;
    std::size_t pos_ = 0;
};

}  // namespace

template <class T>
void write_checkpoint(std::ostream& os, const ParamSet<T>& params) {
    const auto& cfg = params.config();
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<std::uint32_t>(cfg.architecture));
    put_u32(os, static_cast<std::uint32_t>(cfg.depth));
    put_u32(os, static_cast<std::uint32_t>(cfg.base_channels));
    os.write(reinterpret_cast<const char*>(&cfg.eps), sizeof cfg.eps);
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.names()[i];
        const auto& t = params[i];
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (auto extent : t.shape()) put_u32(os, static_cast<std::uint32_t>(extent));
        for (T v : t.values()) {
            const float f = static_cast<float>(v);
            os.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
    }
    if (!os) throw Error("checkpoint write failed");
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    write_checkpoint(os, params);
}

ParamSet<float> read_checkpoint(std::istream& is) {
    Input in(is);
    char magic[sizeof kCheckpointMagic];
    in.read(magic, sizeof magic, "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw ParseError("not a metahdr checkpoint", 0);
    const auto version_at = in.pos();
    if (in.u32("version") != kCheckpointVersion) throw ParseError("unsupported checkpoint version", version_at);

    UNetConfig cfg;
    const auto arch_at = in.pos();
    const auto arch = in.u32("architecture");
    if (arch > static_cast<std::uint32_t>(Architecture::identity)) throw ParseError("unknown architecture", arch_at);
    cfg.architecture = static_cast<Architecture>(arch);
    const auto cfg_at = in.pos();
    cfg.depth = static_cast<int>(in.u32("depth"));
    cfg.base_channels = static_cast<int>(in.u32("base channels"));
    in.read(&cfg.eps, sizeof cfg.eps, "eps");
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ParseError(std::string("invalid network config: ") + e.what(), cfg_at);
    }

    ParamSet<float> params(cfg);
    const auto count_at = in.pos();
    const auto count = in.u32("tensor count");
    if (count > kMaxTensors) throw ParseError("implausible tensor count", count_at);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_at = in.pos();
        const auto len = in.u32("name length");
        if (len == 0 || len > kMaxNameLength) throw ParseError("bad tensor name length", name_at);
        std::string name(len, '\0');
        in.read(name.data(), len, "tensor name");
        const auto rank_at = in.pos();
        const auto rank = in.u32("rank");
        if (rank < 1 || rank > 4) throw ParseError("tensor " + name + " has bad rank", rank_at);
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto extent_at = in.pos();
            const auto extent = in.u32("extent");
            if (extent == 0 || extent > (1u << 20)) throw ParseError("tensor " + name + " has bad extent", extent_at);
            numel *= extent;
            if (numel > (std::uint64_t{1} << 28)) throw ParseError("tensor " + name + " is too large", extent_at);
            shape.push_back(extent);
        }
        std::vector<float> values(static_cast<std::size_t>(numel));
        const auto data_at = in.pos();
        in.read(values.data(), values.size() * sizeof(float), "tensor data");
        for (float v : values)
            if (!std::isfinite(v)) throw ParseError("tensor " + name + " holds non-finite values", data_at);
        if (params.contains(name)) throw ParseError("duplicate tensor " + name, name_at);
        params.insert(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after last tensor", in.pos());
    return params;
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint " + path.string());
    try {
        return read_checkpoint(is);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
}

void check_schema(const UNetConfig& expected, const ParamSet<float>& params) {
    std::vector<std::string> problems;
    if (!(params.config() == expected)) {
        auto describe = [](const UNetConfig& c) {
            std::ostringstream os;
            os << (c.architecture == Architecture::identity ? "identity" : "unet") << " depth=" << c.depth
               << " base_channels=" << c.base_channels << " eps=" << c.eps;
            return os.str();
        };
        problems.push_back("network config is " + describe(params.config()) + ", expected " + describe(expected));
    }
    const auto schema = param_schema(expected);
    std::set<std::string> wanted;
    for (const auto& spec : schema) {
        wanted.insert(spec.name);
        if (!params.contains(spec.name)) {
            problems.push_back(spec.name + " missing");
        } else if (params.at(spec.name).shape() != spec.shape) {
            problems.push_back(spec.name + " is " + shape_string(params.at(spec.name).shape()) + ", expected " +
                               shape_string(spec.shape));
        }
    }
    for (const auto& name : params.names())
        if (!wanted.count(name)) problems.push_back(name + " unexpected");
    if (problems.empty()) {
        // Same names and shapes: insist on schema order as well.
        for (std::size_t i = 0; i < schema.size(); ++i)
            if (params.names()[i] != schema[i].name) problems.push_back(schema[i].name + " out of order");
    }
    if (problems.empty()) return;
    std::string msg = "checkpoint does not match the network config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
}

void write_manifest(const std::filesystem::path& path, const Manifest& entries) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    for (const auto& [key, value] : entries) os << key << '=' << value << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    Manifest out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("manifest line without '=': " + line);
        out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return out;
}

template void write_checkpoint<float>(std::ostream&, const ParamSet<float>&);
template void write_checkpoint<double>(std::ostream&, const ParamSet<double>&);
template void save_checkpoint<float>(const std::filesystem::path&, const ParamSet<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const ParamSet<double>&);

}  // namespace metahdr
