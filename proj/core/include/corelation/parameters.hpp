#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "corelation/autodiff.hpp"

namespace corelation {

/// Ordered collection of named parameters with stable addresses.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;

    Parameter& add(const std::string& name, Array value);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::deque<Parameter>& all() { return params_; }
    const std::deque<Parameter>& all() const { return params_; }
    std::size_t scalar_count() const;

    void zero_grad();

    /// Values keyed by name, for early-stopping snapshots.
    std::map<std::string, Array> snapshot() const;
    /// Overwrites values from a snapshot; names and shapes must match exactly.
    void restore(const std::map<std::string, Array>& values);

private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

/// Contents of a checkpoint container.
struct Checkpoint {
    std::string manifest_json;
    std::map<std::string, Array> tensors;
};

/// Writes the checkpoint container:
///   "CORELCKP" | u32 version | u64 manifest bytes | manifest (JSON text) |
///   u32 tensor count | per tensor: u32 name bytes | name | u32 rank |
///   u64 dims[rank] | float64 payload
/// All integers and floats little-endian; tensors in name order.
void write_checkpoint(const std::filesystem::path& path, const std::string& manifest_json,
                      const ParameterStore& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace corelation
