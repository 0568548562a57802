#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace decfd {

/// Flat `key = value` file with `#` comments. Returns pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_kv_file(
    const std::filesystem::path& path);

/// All training hyperparameters and decision knobs. The manifest
/// serialization is itself a valid config file, so a finished run can be
/// re-launched from it.
struct RunConfig {
    // topic model
    std::size_t topics = 15;
    std::size_t ntm_hidden = 256;
    bool ntm_decoder_relu = true;
    double eps_cos = 1e-6;

    // sequence encoder
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t max_len = 128;

    // optimization
    std::size_t batch_size = 16;
    std::size_t epochs = 50;
    double lr = 1e-5;
    double l2 = 1e-6;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double lambda_ntm = 0.5;
    double gamma_max = 0.25;
    std::size_t gamma_warmup_steps = 1000;
    double proto_momentum = 0.9;

    // vocabulary
    std::size_t min_count = 1;
    std::size_t max_vocab = 10000;
    bool bow_stopwords = false;

    // ablations
    bool no_ntm = false;
    bool no_deconf_tm = false;
    bool no_debias_cfd = false;

    // task
    std::size_t n_labels = 2;
    bool multiclass_head = false;

    // run
    std::uint64_t seed = 7;
    std::string precision = "f64";  // f64 | f32
    std::string data_dir;
    std::string vocab_hash;  // hex, filled at train time

    /// Apply one `key = value` pair; unknown keys or bad values throw
    /// ConfigError.
    void set(const std::string& key, const std::string& value);

    void apply_file(const std::filesystem::path& path);
    /// DECFD_<KEY> environment overrides for every known key.
    void apply_env();
    /// `key=value` strings, e.g. from --set flags.
    void apply_overrides(const std::vector<std::string>& overrides);

    void validate() const;

    /// Full key=value dump in declaration order.
    std::string manifest_text() const;
    std::map<std::string, std::string> to_map() const;

    static RunConfig from_manifest(const std::filesystem::path& path);

    /// Every key except vocab_hash matches (the hash is validated against the
    /// vocab file separately).
    bool run_equivalent(const RunConfig& other) const;

    static const std::vector<std::string>& known_keys();
};

std::string format_double(double v);

}  // namespace decfd
