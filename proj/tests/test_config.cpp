#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "decfd/config.hpp"
#include "decfd/errors.hpp"
#include "doctest.h"

using namespace decfd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() /
                     ("decfd_cfg_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("defaults carry the published constants") {
    RunConfig cfg;
    CHECK(cfg.topics == 15);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.epochs == 50);
    CHECK(cfg.lr == 1e-5);
    CHECK(cfg.l2 == 1e-6);
    CHECK(cfg.lambda_ntm == 0.5);
    CHECK(cfg.gamma_max == 0.25);
    CHECK(cfg.gamma_warmup_steps == 1000);
    CHECK(cfg.adam_beta1 == 0.9);
    CHECK(cfg.adam_beta2 == 0.999);
    CHECK(cfg.adam_eps == 1e-8);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("file parsing with comments and unknown keys") {
    TempDir tmp;
    {
        std::ofstream out(tmp.path / "run.cfg");
        out << "# smoke settings\n";
        out << "lr = 0.005\n";
        out << "epochs = 2   # short run\n";
        out << "no_deconf_tm = true\n";
        out << "\n";
    }
    RunConfig cfg;
    cfg.apply_file(tmp.path / "run.cfg");
    CHECK(cfg.lr == 0.005);
    CHECK(cfg.epochs == 2);
    CHECK(cfg.no_deconf_tm);

    {
        std::ofstream out(tmp.path / "bad.cfg");
        out << "learning_rate = 0.1\n";
    }
    RunConfig cfg2;
    CHECK_THROWS_AS(cfg2.apply_file(tmp.path / "bad.cfg"), ConfigError);

    {
        std::ofstream out(tmp.path / "noval.cfg");
        out << "lr\n";
    }
    CHECK_THROWS_AS(cfg2.apply_file(tmp.path / "noval.cfg"), ConfigError);
    CHECK_THROWS_AS(cfg2.apply_file(tmp.path / "missing.cfg"), ConfigError);
}

TEST_CASE("value parsing errors") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("lr", "fast"), ConfigError);
    CHECK_THROWS_AS(cfg.set("epochs", "two"), ConfigError);
    CHECK_THROWS_AS(cfg.set("no_ntm", "yep"), ConfigError);
    CHECK_THROWS_AS(cfg.set("nope", "1"), ConfigError);
    CHECK_NOTHROW(cfg.set("no_ntm", "1"));
    CHECK(cfg.no_ntm);
}

TEST_CASE("validation rejects inconsistent settings") {
    RunConfig cfg;
    cfg.d_model = 30;
    cfg.n_heads = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.precision = "f16";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.n_labels = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // needs multiclass_head
    cfg.multiclass_head = true;
    CHECK_NOTHROW(cfg.validate());
    cfg = RunConfig{};
    cfg.proto_momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("environment overrides file, flags override both") {
    TempDir tmp;
    {
        std::ofstream out(tmp.path / "run.cfg");
        out << "seed = 1\nlr = 0.001\n";
    }
    ::setenv("DECFD_SEED", "2", 1);
    RunConfig cfg;
    cfg.apply_file(tmp.path / "run.cfg");
    cfg.apply_env();
    CHECK(cfg.seed == 2);
    CHECK(cfg.lr == 0.001);
    cfg.apply_overrides({"seed=3", "lr = 0.01"});
    CHECK(cfg.seed == 3);
    CHECK(cfg.lr == 0.01);
    CHECK_THROWS_AS(cfg.apply_overrides({"seed at 4"}), ConfigError);
    ::unsetenv("DECFD_SEED");
}

TEST_CASE("manifest round trips as a config file") {
    TempDir tmp;
    RunConfig cfg;
    cfg.lr = 0.0123;
    cfg.seed = 99;
    cfg.no_ntm = true;
    cfg.vocab_hash = "deadbeef";
    cfg.data_dir = "some/dir";
    {
        std::ofstream out(tmp.path / "manifest.txt");
        out << cfg.manifest_text();
    }
    const RunConfig back = RunConfig::from_manifest(tmp.path / "manifest.txt");
    CHECK(back.to_map() == cfg.to_map());
    CHECK(back.run_equivalent(cfg));

    RunConfig other = cfg;
    other.seed = 100;
    CHECK(!other.run_equivalent(cfg));
    // vocab_hash differences do not break run equivalence
    RunConfig hash_only = cfg;
    hash_only.vocab_hash = "";
    CHECK(hash_only.run_equivalent(cfg));
}
