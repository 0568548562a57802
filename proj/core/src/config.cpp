#include "decfd/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "decfd/errors.hpp"

namespace decfd {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(parse_u64(key, v));
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::pair<std::string, std::string>> parse_kv_file(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open: " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key = value at line " +
                              std::to_string(lineno) + " in " + path.string());
        }
        out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "topics",        "ntm_hidden",   "ntm_decoder_relu",  "eps_cos",
        "d_model",       "n_layers",     "n_heads",           "max_len",
        "batch_size",    "epochs",       "lr",                "l2",
        "adam_beta1",    "adam_beta2",   "adam_eps",          "lambda_ntm",
        "gamma_max",     "gamma_warmup_steps", "proto_momentum",
        "min_count",     "max_vocab",    "bow_stopwords",
        "no_ntm",        "no_deconf_tm", "no_debias_cfd",
        "n_labels",      "multiclass_head",
        "seed",          "precision",    "data_dir",          "vocab_hash"};
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "topics") topics = parse_size(key, value);
    else if (key == "ntm_hidden") ntm_hidden = parse_size(key, value);
    else if (key == "ntm_decoder_relu") ntm_decoder_relu = parse_bool(key, value);
    else if (key == "eps_cos") eps_cos = parse_double(key, value);
    else if (key == "d_model") d_model = parse_size(key, value);
    else if (key == "n_layers") n_layers = parse_size(key, value);
    else if (key == "n_heads") n_heads = parse_size(key, value);
    else if (key == "max_len") max_len = parse_size(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "lr") lr = parse_double(key, value);
    else if (key == "l2") l2 = parse_double(key, value);
    else if (key == "adam_beta1") adam_beta1 = parse_double(key, value);
    else if (key == "adam_beta2") adam_beta2 = parse_double(key, value);
    else if (key == "adam_eps") adam_eps = parse_double(key, value);
    else if (key == "lambda_ntm") lambda_ntm = parse_double(key, value);
    else if (key == "gamma_max") gamma_max = parse_double(key, value);
    else if (key == "gamma_warmup_steps") gamma_warmup_steps = parse_size(key, value);
    else if (key == "proto_momentum") proto_momentum = parse_double(key, value);
    else if (key == "min_count") min_count = parse_size(key, value);
    else if (key == "max_vocab") max_vocab = parse_size(key, value);
    else if (key == "bow_stopwords") bow_stopwords = parse_bool(key, value);
    else if (key == "no_ntm") no_ntm = parse_bool(key, value);
    else if (key == "no_deconf_tm") no_deconf_tm = parse_bool(key, value);
    else if (key == "no_debias_cfd") no_debias_cfd = parse_bool(key, value);
    else if (key == "n_labels") n_labels = parse_size(key, value);
    else if (key == "multiclass_head") multiclass_head = parse_bool(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "precision") precision = value;
    else if (key == "data_dir") data_dir = value;
    else if (key == "vocab_hash") vocab_hash = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    for (const auto& [k, v] : parse_kv_file(path)) set(k, v);
}

void RunConfig::apply_env() {
    for (const std::string& key : known_keys()) {
        std::string env_name = "DECFD_";
        for (char c : key) env_name.push_back(static_cast<char>(std::toupper(c)));
        if (const char* v = std::getenv(env_name.c_str())) set(key, v);
    }
}

void RunConfig::apply_overrides(const std::vector<std::string>& overrides) {
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: override must be key=value, got '" + kv + "'");
        }
        std::string k = kv.substr(0, eq);
        std::string v = kv.substr(eq + 1);
        // allow unpadded "k=v" and padded "k = v" forms
        while (!k.empty() && std::isspace(static_cast<unsigned char>(k.back()))) k.pop_back();
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.erase(0, 1);
        set(k, v);
    }
}

void RunConfig::validate() const {
    if (topics == 0) throw ConfigError("config: topics must be >= 1");
    if (ntm_hidden == 0) throw ConfigError("config: ntm_hidden must be >= 1");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("config: d_model must be a positive multiple of n_heads");
    }
    if (n_layers == 0) throw ConfigError("config: n_layers must be >= 1");
    if (max_len < 2) throw ConfigError("config: max_len must be >= 2");
    if (batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("config: lr must be > 0");
    if (l2 < 0.0) throw ConfigError("config: l2 must be >= 0");
    if (lambda_ntm < 0.0) throw ConfigError("config: lambda_ntm must be >= 0");
    if (gamma_max < 0.0) throw ConfigError("config: gamma_max must be >= 0");
    if (proto_momentum < 0.0 || proto_momentum >= 1.0) {
        throw ConfigError("config: proto_momentum must be in [0, 1)");
    }
    if (!(eps_cos > 0.0) || eps_cos >= 1.0) {
        throw ConfigError("config: eps_cos must be in (0, 1)");
    }
    if (n_labels < 2) throw ConfigError("config: n_labels must be >= 2");
    if (n_labels > 2 && !multiclass_head) {
        throw ConfigError("config: n_labels > 2 requires multiclass_head = true");
    }
    if (precision != "f64" && precision != "f32") {
        throw ConfigError("config: precision must be f64 or f32");
    }
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> m;
    m["topics"] = std::to_string(topics);
    m["ntm_hidden"] = std::to_string(ntm_hidden);
    m["ntm_decoder_relu"] = ntm_decoder_relu ? "true" : "false";
    m["eps_cos"] = format_double(eps_cos);
    m["d_model"] = std::to_string(d_model);
    m["n_layers"] = std::to_string(n_layers);
    m["n_heads"] = std::to_string(n_heads);
    m["max_len"] = std::to_string(max_len);
    m["batch_size"] = std::to_string(batch_size);
    m["epochs"] = std::to_string(epochs);
    m["lr"] = format_double(lr);
    m["l2"] = format_double(l2);
    m["adam_beta1"] = format_double(adam_beta1);
    m["adam_beta2"] = format_double(adam_beta2);
    m["adam_eps"] = format_double(adam_eps);
    m["lambda_ntm"] = format_double(lambda_ntm);
    m["gamma_max"] = format_double(gamma_max);
    m["gamma_warmup_steps"] = std::to_string(gamma_warmup_steps);
    m["proto_momentum"] = format_double(proto_momentum);
    m["min_count"] = std::to_string(min_count);
    m["max_vocab"] = std::to_string(max_vocab);
    m["bow_stopwords"] = bow_stopwords ? "true" : "false";
    m["no_ntm"] = no_ntm ? "true" : "false";
    m["no_deconf_tm"] = no_deconf_tm ? "true" : "false";
    m["no_debias_cfd"] = no_debias_cfd ? "true" : "false";
    m["n_labels"] = std::to_string(n_labels);
    m["multiclass_head"] = multiclass_head ? "true" : "false";
    m["seed"] = std::to_string(seed);
    m["precision"] = precision;
    m["data_dir"] = data_dir;
    m["vocab_hash"] = vocab_hash;
    return m;
}

std::string RunConfig::manifest_text() const {
    const auto m = to_map();
    std::ostringstream os;
    for (const std::string& key : known_keys()) {
        os << key << " = " << m.at(key) << '\n';
    }
    return os.str();
}

RunConfig RunConfig::from_manifest(const std::filesystem::path& path) {
    RunConfig cfg;
    cfg.apply_file(path);
    cfg.validate();
    return cfg;
}

bool RunConfig::run_equivalent(const RunConfig& other) const {
    auto a = to_map();
    auto b = other.to_map();
    a.erase("vocab_hash");
    b.erase("vocab_hash");
    return a == b;
}

}  // namespace decfd
