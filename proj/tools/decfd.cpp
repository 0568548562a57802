// decfd: deconfounded counterfactual detection at desk scale.
//
// Subcommands: gen-synth, build-vocab, train, eval, topics, diag.
// Exit codes: 0 success, 2 config error, 3 data error, 4 checkpoint error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "decfd/config.hpp"
#include "decfd/corpus.hpp"
#include "decfd/errors.hpp"
#include "decfd/model.hpp"
#include "decfd/synth.hpp"
#include "decfd/trainer.hpp"

namespace fs = std::filesystem;
using namespace decfd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

// ---- run directory helpers ----

struct RunDir {
    fs::path dir;
    RunConfig cfg;
    corpus::Vocab vocab;

    static RunDir open(const fs::path& dir) {
        RunDir rd;
        rd.dir = dir;
        const fs::path manifest = dir / "manifest.txt";
        if (!fs::exists(manifest)) {
            throw CheckpointError("run directory has no manifest: " + manifest.string());
        }
        rd.cfg = RunConfig::from_manifest(manifest);
        const fs::path vocab_path = dir / "vocab.tsv";
        if (!fs::exists(vocab_path)) {
            throw CheckpointError("run directory has no vocab.tsv: " + vocab_path.string());
        }
        rd.vocab = corpus::Vocab::load(vocab_path);
        if (!rd.cfg.vocab_hash.empty() && hash_hex(rd.vocab.hash()) != rd.cfg.vocab_hash) {
            throw CheckpointError("vocab hash mismatch: manifest says " + rd.cfg.vocab_hash +
                                  ", vocab.tsv hashes to " + hash_hex(rd.vocab.hash()));
        }
        return rd;
    }
};

corpus::LabeledDataset load_data(const fs::path& path, const RunConfig& cfg,
                                 corpus::Split split = corpus::Split::test) {
    return corpus::load_tsv(path, corpus::default_label_map(cfg.n_labels), split);
}

// ---- gen-synth ----

int cmd_gen_synth(const std::string& config_path, const std::string& out_dir,
                  const std::vector<std::string>& sets) {
    synth::Config cfg;
    if (!config_path.empty()) cfg.apply_file(config_path);
    cfg.apply_env();
    cfg.apply_overrides(sets);
    cfg.validate();

    const auto corpus = synth::gen_corpus(cfg);
    synth::write_corpus(corpus, out_dir);
    for (const auto* split : {&corpus.train, &corpus.val, &corpus.test_iid,
                              &corpus.test_flipped, &corpus.test_balanced}) {
        std::cout << corpus::dataset_stats(*split).table() << '\n';
    }
    std::cout << "wrote corpus to " << out_dir << '\n';
    return 0;
}

// ---- build-vocab ----

int cmd_build_vocab(const std::string& data_path, const std::string& out_path,
                    std::size_t min_count, std::size_t max_size, std::size_t n_labels) {
    const auto ds = corpus::load_tsv(data_path, corpus::default_label_map(n_labels));
    const auto vocab = corpus::Vocab::build(ds.documents, min_count, max_size);
    vocab.save(out_path);
    std::cout << "vocab size " << vocab.size() << ", hash " << hash_hex(vocab.hash())
              << ", written to " << out_path << '\n';
    return 0;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::vector<std::string>& sets) {
    RunConfig cfg;
    if (!config_path.empty()) cfg.apply_file(config_path);
    cfg.apply_env();
    cfg.apply_overrides(sets);
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (cfg.data_dir.empty()) throw ConfigError("train: no data directory given");
    cfg.validate();

    const fs::path data(cfg.data_dir);
    const fs::path out(out_dir);
    fs::create_directories(out);

    auto train_ds = load_data(data / "train.tsv", cfg, corpus::Split::train);
    if (train_ds.documents.empty()) throw DataError("train: empty training set");
    std::optional<corpus::LabeledDataset> val_ds;
    if (fs::exists(data / "val.tsv")) {
        val_ds = load_data(data / "val.tsv", cfg, corpus::Split::val);
    }

    // vocab priority: the run's own, then the data directory's, else build fresh
    corpus::Vocab vocab;
    if (fs::exists(out / "vocab.tsv")) {
        vocab = corpus::Vocab::load(out / "vocab.tsv");
    } else if (fs::exists(data / "vocab.tsv")) {
        vocab = corpus::Vocab::load(data / "vocab.tsv");
    } else {
        vocab = corpus::Vocab::build(train_ds.documents, cfg.min_count, cfg.max_vocab);
    }
    vocab.save(out / "vocab.tsv");
    cfg.vocab_hash = hash_hex(vocab.hash());

    const fs::path manifest_path = out / "manifest.txt";
    const fs::path ckpt_path = out / "model.ckpt";
    const fs::path csv_path = out / "epochs.csv";
    bool resume = false;
    if (fs::exists(manifest_path)) {
        const RunConfig prev = RunConfig::from_manifest(manifest_path);
        if (!prev.run_equivalent(cfg)) {
            throw ConfigError("train: config does not match the manifest in " +
                              out.string() + "; refusing to resume");
        }
        if (!prev.vocab_hash.empty() && prev.vocab_hash != cfg.vocab_hash) {
            throw CheckpointError("train: vocab hash changed under run directory " +
                                  out.string());
        }
        resume = fs::exists(ckpt_path);
    }

    Trainer trainer(cfg, std::move(vocab));
    std::ofstream csv;
    if (resume) {
        trainer.restore(ckpt_path);
        csv.open(csv_path, std::ios::app);
        std::cout << "resuming at epoch " << trainer.epochs_done() << ", step "
                  << trainer.optimizer_steps() << '\n';
    } else {
        write_file(manifest_path, cfg.manifest_text());
        csv.open(csv_path, std::ios::trunc);
        csv << EpochStats::csv_header() << '\n';
    }
    if (!csv) throw DataError("train: cannot open " + csv_path.string());

    if (cfg.epochs == 0) {
        trainer.save(ckpt_path);
        std::cout << "epochs = 0: wrote initial checkpoint only\n";
        return 0;
    }

    if (!trainer.warmed()) {
        trainer.warm_pass(train_ds);
        std::cout << "warm pass done (" << trainer.optimizer_steps() << " steps)\n";
    }
    while (trainer.epochs_done() < cfg.epochs) {
        const EpochStats st = trainer.run_epoch(train_ds, val_ds ? &*val_ds : nullptr);
        csv << st.csv_row() << '\n';
        csv.flush();
        trainer.save(ckpt_path);
        std::cout << "epoch " << st.epoch << "/" << cfg.epochs << "  L_cfd " << st.mean_cfd
                  << "  L_ntm " << st.mean_ntm << "  gamma " << st.gamma;
        if (st.val) {
            std::cout << "  val acc " << st.val->acc << " mcc " << st.val->mcc << " f1 "
                      << st.val->f1;
        }
        std::cout << '\n';
    }
    std::cout << "done: " << trainer.optimizer_steps() << " optimizer steps, checkpoint "
              << ckpt_path.string() << '\n';
    return 0;
}

// ---- eval ----

int cmd_eval(const std::string& run_dir, const std::string& data_path, std::size_t balanced,
             std::uint64_t balanced_seed, double threshold, bool csv_only) {
    RunDir rd = RunDir::open(run_dir);
    Trainer tr(rd.cfg, rd.vocab);
    tr.restore(rd.dir / "model.ckpt");
    auto ds = load_data(data_path, rd.cfg);
    if (ds.documents.empty()) throw DataError("eval: empty dataset " + data_path);
    if (balanced > 0) ds = corpus::balanced_subsample(ds, balanced, balanced_seed);

    const EvalResult r = evaluate(tr.model(), ds, threshold);
    if (!csv_only) {
        std::printf("split: %s (%zu docs%s)\n", data_path.c_str(), ds.documents.size(),
                    balanced ? ", balanced" : "");
        std::printf("  %-10s %.6f\n", "accuracy", r.scores.acc);
        std::printf("  %-10s %.6f\n", "mcc", r.scores.mcc);
        std::printf("  %-10s %.6f\n", "f1", r.scores.f1);
        std::printf("  confusion tp=%zu fp=%zu fn=%zu tn=%zu\n", r.confusion.tp,
                    r.confusion.fp, r.confusion.fn, r.confusion.tn);
    }
    std::printf("acc,mcc,f1\n%.17g,%.17g,%.17g\n", r.scores.acc, r.scores.mcc, r.scores.f1);
    return 0;
}

// ---- topics ----

int cmd_topics(const std::string& run_dir, std::size_t top_k, const std::string& data_path,
               const std::string& theta_out) {
    RunDir rd = RunDir::open(run_dir);
    Trainer tr(rd.cfg, rd.vocab);
    tr.restore(rd.dir / "model.ckpt");
    Model& m = tr.model();

    const auto tw = ntm::top_words(m.ntm_p, top_k);
    for (std::size_t k = 0; k < tw.size(); ++k) {
        std::cout << "topic_" << k << '\t';
        for (std::size_t i = 0; i < tw[k].size(); ++i) {
            if (i) std::cout << ' ';
            std::cout << m.vocab.token_of(tw[k][i]);
        }
        std::cout << '\n';
    }

    if (!data_path.empty() && !theta_out.empty()) {
        const auto ds = load_data(data_path, rd.cfg);
        std::ofstream out(theta_out, std::ios::trunc);
        if (!out) throw DataError("topics: cannot open " + theta_out);
        out << "doc_id";
        for (std::size_t k = 0; k < m.cfg.topics; ++k) out << ",theta_" << k;
        out << '\n';
        for (const auto& doc : ds.documents) {
            const auto st = m.topic_state(doc);
            out << doc.id;
            for (std::size_t k = 0; k < m.cfg.topics; ++k) {
                out << ',' << format_double(st.theta[k]);
            }
            out << '\n';
        }
        std::cout << "theta dump written to " << theta_out << '\n';
    }
    return 0;
}

// ---- diag ----

void write_pgm_strip(const fs::path& path, const nn::Tensor& weights) {
    double mx = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) mx = std::max(mx, weights[i]);
    std::ostringstream os;
    const int rows = 8;
    os << "P2\n" << weights.size() << ' ' << rows << "\n255\n";
    for (int r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const int v =
                mx > 0.0 ? static_cast<int>(std::lround(255.0 * weights[i] / mx)) : 0;
            os << v << (i + 1 < weights.size() ? " " : "");
        }
        os << '\n';
    }
    write_file(path, os.str());
}

int cmd_diag(const std::string& run_dir, const std::string& kind,
             const std::string& data_path, const std::string& doc_id,
             const std::string& out_prefix) {
    RunDir rd = RunDir::open(run_dir);
    Trainer tr(rd.cfg, rd.vocab);
    tr.restore(rd.dir / "model.ckpt");
    Model& m = tr.model();

    if (kind == "topic-dist") {
        const auto ds = load_data(data_path, rd.cfg);
        if (ds.documents.empty()) throw DataError("diag: empty dataset " + data_path);
        const auto shares = synth::topic_concentration(
            [&](const corpus::Document& d) { return m.topic_state(d).theta; }, ds);
        std::ostringstream os;
        os << "topic,share\n";
        for (std::size_t k = 0; k < shares.size(); ++k) {
            os << k << ',' << format_double(shares[k]) << '\n';
        }
        os << "entropy," << format_double(synth::concentration_entropy(shares)) << '\n';
        std::cout << os.str();
        if (!out_prefix.empty()) write_file(out_prefix + ".csv", os.str());
        return 0;
    }

    if (kind == "attn") {
        const auto ds = load_data(data_path, rd.cfg);
        const corpus::Document* doc = nullptr;
        for (const auto& d : ds.documents) {
            if (d.id == doc_id) {
                doc = &d;
                break;
            }
        }
        if (!doc) throw DataError("diag: unknown doc id '" + doc_id + "' in " + data_path);
        nn::Graph g;
        const auto fwd = m.encode_doc(g, *doc);
        const nn::Tensor w = encoder::cls_attention(fwd);
        std::ostringstream csv;
        csv << "token,weight\n";
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::cout << doc->tokens[i] << '\t' << format_double(w[i]) << '\n';
            csv << doc->tokens[i] << ',' << format_double(w[i]) << '\n';
        }
        if (!out_prefix.empty()) {
            write_file(out_prefix + ".csv", csv.str());
            write_pgm_strip(out_prefix + ".pgm", w);
            std::cout << "wrote " << out_prefix << ".csv and " << out_prefix << ".pgm\n";
        }
        return 0;
    }

    if (kind == "clue-gap") {
        const fs::path dir(data_path);
        const auto iid = load_data(dir / "test_iid.tsv", rd.cfg);
        const auto flipped = load_data(dir / "test_flipped.tsv", rd.cfg);
        const auto gap = synth::clue_gap(
            [&](const corpus::Document& d) { return m.predict_prob(d); }, iid, flipped);
        std::ostringstream os;
        os << "acc_iid,acc_flipped,gap\n"
           << format_double(gap.acc_iid) << ',' << format_double(gap.acc_flipped) << ','
           << format_double(gap.gap) << '\n';
        std::cout << os.str();
        if (!out_prefix.empty()) write_file(out_prefix + ".csv", os.str());
        return 0;
    }

    throw ConfigError("diag: unknown kind '" + kind + "' (topic-dist, attn, clue-gap)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deconfounded counterfactual detection workbench"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, run_dir, doc_id, theta_out, out_prefix;
    std::vector<std::string> sets;
    std::size_t min_count = 1, max_size = 10000, n_labels = 2, top_k = 10, balanced = 0;
    std::uint64_t balanced_seed = 7;
    double threshold = 0.5;
    bool csv_only = false;
    std::string kind;

    auto* gen = app.add_subcommand("gen-synth", "generate the synthetic biased corpus");
    gen->add_option("--config", config_path, "synth config file (key = value)");
    gen->add_option("--out", out_path, "output directory")->required();
    gen->add_option("--set", sets, "override: key=value");

    auto* bv = app.add_subcommand("build-vocab", "build a vocabulary from a TSV");
    bv->add_option("--data", data_path, "input TSV")->required();
    bv->add_option("--out", out_path, "output vocab file")->required();
    bv->add_option("--min-count", min_count, "minimum token count");
    bv->add_option("--max-size", max_size, "vocabulary cap");
    bv->add_option("--labels", n_labels, "number of labels in the TSV");

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "run config file");
    train->add_option("--data", data_path, "data directory with train.tsv [val.tsv]");
    train->add_option("--out", out_path, "run output directory")->required();
    train->add_option("--set", sets, "override: key=value");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a TSV");
    ev->add_option("--run", run_dir, "run directory")->required();
    ev->add_option("--data", data_path, "dataset TSV")->required();
    ev->add_option("--balanced", balanced, "per-class balanced subsample size");
    ev->add_option("--seed", balanced_seed, "subsample seed");
    ev->add_option("--threshold", threshold, "decision threshold");
    ev->add_flag("--csv", csv_only, "machine-readable output only");

    auto* tp = app.add_subcommand("topics", "print per-topic top words");
    tp->add_option("--run", run_dir, "run directory")->required();
    tp->add_option("--top-k", top_k, "words per topic");
    tp->add_option("--data", data_path, "dataset TSV for a theta dump");
    tp->add_option("--theta-out", theta_out, "CSV path for per-document theta");

    auto* dg = app.add_subcommand("diag", "diagnostics: topic-dist, attn, clue-gap");
    dg->add_option("--run", run_dir, "run directory")->required();
    dg->add_option("--kind", kind, "topic-dist | attn | clue-gap")->required();
    dg->add_option("--data", data_path, "dataset TSV (or directory for clue-gap)");
    dg->add_option("--doc-id", doc_id, "document id (attn)");
    dg->add_option("--out", out_prefix, "output file prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_synth(config_path, out_path, sets);
        if (bv->parsed())
            return cmd_build_vocab(data_path, out_path, min_count, max_size, n_labels);
        if (train->parsed()) return cmd_train(config_path, data_path, out_path, sets);
        if (ev->parsed())
            return cmd_eval(run_dir, data_path, balanced, balanced_seed, threshold, csv_only);
        if (tp->parsed()) return cmd_topics(run_dir, top_k, data_path, theta_out);
        if (dg->parsed()) return cmd_diag(run_dir, kind, data_path, doc_id, out_prefix);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCheckpoint;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
