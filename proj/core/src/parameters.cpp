#include "corelation/parameters.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace corelation {

Parameter& ParameterStore::add(const std::string& name, Array value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Parameter p;
    p.name = name;
    p.grad = Array(value.shape());
    p.value = std::move(value);
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::map<std::string, Array> ParameterStore::snapshot() const {
    std::map<std::string, Array> out;
    for (const auto& p : params_) out.emplace(p.name, p.value);
    return out;
}

void ParameterStore::restore(const std::map<std::string, Array>& values) {
    if (values.size() != params_.size()) {
        throw std::invalid_argument("parameter count mismatch: store has " + std::to_string(params_.size()) +
                                    ", snapshot has " + std::to_string(values.size()));
    }
    for (auto& p : params_) {
        auto it = values.find(p.name);
        if (it == values.end()) throw std::invalid_argument("snapshot lacks parameter " + p.name);
        if (it->second.shape() != p.value.shape()) {
            throw std::invalid_argument("shape mismatch for " + p.name + ": " + p.value.shape_string() +
                                        " vs " + it->second.shape_string());
        }
        p.value = it->second;
    }
}

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'O', 'R', 'E', 'L', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T take(std::istream& in) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        const int ch = in.get();
        if (ch == EOF) throw std::runtime_error("checkpoint: unexpected end of file");
        bits |= static_cast<U>(static_cast<unsigned char>(ch)) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

std::string take_string(std::istream& in, std::size_t n) {
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw std::runtime_error("checkpoint: unexpected end of file");
    }
    return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::string& manifest_json,
                      const ParameterStore& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, manifest_json.size());
    out.write(manifest_json.data(), static_cast<std::streamsize>(manifest_json.size()));

    std::map<std::string, const Parameter*> ordered;
    for (const auto& p : params.all()) ordered.emplace(p.name, &p);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ordered.size()));
    for (const auto& [name, p] : ordered) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d : p->value.shape()) put<std::uint64_t>(out, d);
        for (double v : p->value.data()) put<double>(out, v);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    const std::string magic = take_string(in, kMagic.size());
    if (magic != std::string(kMagic.data(), kMagic.size())) {
        throw std::runtime_error("not a checkpoint file: " + path.string());
    }
    const auto version = take<std::uint32_t>(in);
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.manifest_json = take_string(in, take<std::uint64_t>(in));
    const auto count = take<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = take_string(in, take<std::uint32_t>(in));
        const auto rank = take<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = take<std::uint64_t>(in);
            n *= d;
        }
        std::vector<double> data(n);
        for (auto& v : data) v = take<double>(in);
        ckpt.tensors.emplace(std::move(name), Array(std::move(shape), std::move(data)));
    }
    return ckpt;
}

}  // namespace corelation
