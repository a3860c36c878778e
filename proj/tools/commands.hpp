#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "corelation/data.hpp"
#include "corelation/model.hpp"
#include "corelation/training.hpp"

namespace corelation::cli {

/// Failure with a short category printed as `error[category]: message`.
class CommandError : public std::runtime_error {
public:
    CommandError(std::string category, const std::string& message, int exit_code = 1)
        : std::runtime_error(message), category_(std::move(category)), exit_code_(exit_code) {}

    const std::string& category() const { return category_; }
    int exit_code() const { return exit_code_; }

private:
    std::string category_;
    int exit_code_;
};

/// Flat `key = value` settings. Only known keys are accepted; every key has a default.
class RunConfig {
public:
    RunConfig();

    static const std::vector<std::string>& keys();
    static bool known(const std::string& key);

    /// Reads `key = value` lines; `#` starts a comment, blank lines are skipped.
    void merge_text(const std::string& text, const std::string& origin = "config");
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool has_value(const std::string& key) const { return !get(key).empty(); }

    std::size_t get_size(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;

    ModelConfig model_config() const;
    TrainConfig train_config() const;
    SyntheticSpec synthetic_spec() const;
    CodeSpace::Options space_options() const;

    /// Every key, sorted, one `key = value` line each.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

/// Number of graph edges between A majors and K selected codes.
std::size_t edge_count(std::size_t majors, std::size_t k);
/// Floats held by the materialized edge embeddings of one graph.
std::size_t edge_memory_proxy(std::size_t majors, std::size_t k, std::size_t edge_dim);

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Returns the exit code; reports go to `out`, the one-line error to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace corelation::cli
