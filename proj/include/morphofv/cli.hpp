#pragma once

// Command-line front end. run_cli() is what tools/morphofv.cpp calls; tests
// call it in-process.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "morphofv/error.hpp"
#include "morphofv/fisher.hpp"
#include "morphofv/fusion.hpp"
#include "morphofv/fvc.hpp"
#include "morphofv/gmm.hpp"
#include "morphofv/manifest.hpp"
#include "morphofv/metrics.hpp"
#include "morphofv/model_io.hpp"
#include "morphofv/pca.hpp"
#include "morphofv/phoc.hpp"
#include "morphofv/pipeline.hpp"
#include "morphofv/synthetic.hpp"

namespace morphofv {

namespace cli_detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MORPHOFV_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw PreconditionError(std::string("MORPHOFV_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

inline Alphabet load_alphabet(const std::string& bigram_file) {
  return bigram_file.empty() ? Alphabet::standard() : Alphabet::from_file(bigram_file);
}

struct TextFitOptions {
  std::string dictionary;
  std::string bigrams;
  std::size_t max_words = 20000;
  Eigen::Index pca_dim = 300;
  Eigen::Index k = 64;
  int max_iters = 200;
  std::optional<std::uint64_t> seed;
};

inline ModelBundle fit_pca_bundle(const TextFitOptions& o, std::ostream& log) {
  const Alphabet alphabet = load_alphabet(o.bigrams);
  const auto words = prepare_dictionary(read_word_list(o.dictionary), o.max_words);
  log << "pca: " << words.size() << " dictionary words, d=" << o.pca_dim << "\n";
  ModelBundle b;
  b.bigrams = alphabet.bigrams();
  b.pca = fit_pca(phoc_matrix(words, alphabet), o.pca_dim);
  b.config["pca"] = {{"dim", o.pca_dim}, {"max_words", o.max_words}, {"words", words.size()}};
  return b;
}

inline void fit_gmm_into(ModelBundle& b, const TextFitOptions& o, std::ostream& log) {
  const Alphabet alphabet = b.alphabet();
  const auto words = prepare_dictionary(read_word_list(o.dictionary), o.max_words);
  const Eigen::MatrixXd reduced = project_rows(*b.pca, phoc_matrix(words, alphabet));
  EmConfig em;
  em.seed = resolve_seed(o.seed);
  em.max_iters = o.max_iters;
  const GmmFit fit = fit_gmm(reduced, o.k, em);
  for (const auto& w : fit.warnings) log << "warning: gmm: " << w << "\n";
  log << "gmm: K=" << o.k << ", " << fit.iterations << " EM iterations, log-likelihood "
      << fit.log_likelihoods.back() << (fit.converged ? " (converged)" : "") << "\n";
  b.gmm = fit.model;
  b.config["gmm"] = {{"k", o.k}, {"seed", em.seed}, {"max_iters", em.max_iters}, {"tol", em.tol},
                     {"variance_floor", em.variance_floor}, {"max_words", o.max_words}};
}

inline void add_text_fit_flags(CLI::App* cmd, TextFitOptions& o, bool pca, bool gmm) {
  cmd->add_option("--dictionary", o.dictionary, "Word list, one word per line")->required()->check(CLI::ExistingFile);
  cmd->add_option("--max-words", o.max_words, "Evenly subsample the dictionary to this many words (0 = all)");
  if (pca) {
    cmd->add_option("--bigrams", o.bigrams, "Bigram asset (default: built-in list)")->check(CLI::ExistingFile);
    cmd->add_option("--pca-dim", o.pca_dim, "PCA output dimension")->check(CLI::PositiveNumber);
  }
  if (gmm) {
    cmd->add_option("--k", o.k, "Number of Gaussian components")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", o.max_iters, "EM iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "RNG seed (falls back to MORPHOFV_SEED, then 0)");
  }
}

struct FeatureFlags {
  std::size_t max_proposals = 15;
  std::optional<double> min_confidence;
  bool fv_normalize = false;

  FeatureSettings settings() const {
    FeatureSettings s;
    s.selector.max_proposals = max_proposals;
    s.selector.min_confidence = min_confidence;
    s.normalize = fv_normalize;
    return s;
  }
};

inline void add_feature_flags(CLI::App* cmd, FeatureFlags& f) {
  cmd->add_option("--max-proposals", f.max_proposals, "Keep at most this many word proposals per image")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--min-confidence", f.min_confidence, "Drop proposals below this confidence");
  cmd->add_flag("--fv-normalize", f.fv_normalize, "Apply signed-sqrt + L2 normalization to Fisher vectors");
}

}  // namespace cli_detail

// Runs one subcommand. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"morphofv: PHOC Fisher-vector encoding and attention-fused classification"};
  app.require_subcommand(1);

  // derive-bigrams
  std::string db_dictionary, db_out;
  std::size_t db_count = kBigramCount;
  auto* derive = app.add_subcommand("derive-bigrams", "Most frequent adjacent character pairs of a dictionary");
  derive->add_option("--dictionary", db_dictionary)->required()->check(CLI::ExistingFile);
  derive->add_option("--count", db_count)->check(CLI::PositiveNumber);
  derive->add_option("--out", db_out, "Output file (default: stdout)");

  // phoc-encode
  std::string pe_word, pe_words, pe_bigrams, pe_out;
  auto* phoc = app.add_subcommand("phoc-encode", "PHOC descriptors of words");
  auto* pe_word_opt = phoc->add_option("--word", pe_word, "Print the 604-bit PHOC of one word");
  auto* pe_words_opt = phoc->add_option("--words", pe_words, "Word list to encode")->check(CLI::ExistingFile);
  pe_word_opt->excludes(pe_words_opt);
  phoc->add_option("--bigrams", pe_bigrams)->check(CLI::ExistingFile);
  phoc->add_option("--out", pe_out, "FVC1 output for --words");

  // pca-fit / gmm-fit / fit
  TextFitOptions pca_opts, gmm_opts, fit_opts;
  std::string pca_out, gmm_model, gmm_out, fit_out;
  auto* pca_cmd = app.add_subcommand("pca-fit", "Fit PCA on dictionary PHOCs");
  add_text_fit_flags(pca_cmd, pca_opts, true, false);
  pca_cmd->add_option("--out", pca_out)->required();
  auto* gmm_cmd = app.add_subcommand("gmm-fit", "Fit the GMM on PCA-reduced dictionary PHOCs");
  add_text_fit_flags(gmm_cmd, gmm_opts, false, true);
  gmm_cmd->add_option("--model", gmm_model, "Model file holding the PCA")->required()->check(CLI::ExistingFile);
  gmm_cmd->add_option("--out", gmm_out)->required();
  auto* fit_cmd = app.add_subcommand("fit", "pca-fit followed by gmm-fit");
  add_text_fit_flags(fit_cmd, fit_opts, true, true);
  fit_cmd->add_option("--out", fit_out)->required();

  // encode-fv
  std::string ef_manifest, ef_model, ef_out;
  FeatureFlags ef_flags;
  auto* encode = app.add_subcommand("encode-fv", "Fisher vector per manifest sample (FVC1, manifest order)");
  encode->add_option("--manifest", ef_manifest)->required()->check(CLI::ExistingFile);
  encode->add_option("--model", ef_model)->required()->check(CLI::ExistingFile);
  encode->add_option("--out", ef_out)->required();
  add_feature_flags(encode, ef_flags);

  // train
  std::string tr_manifest, tr_model, tr_out, tr_metrics;
  FeatureFlags tr_flags;
  TrainConfig tr_cfg;
  std::optional<std::uint64_t> tr_seed;
  Eigen::Index tr_visual_hidden = 1024, tr_text_hidden = 512;
  auto* train_cmd = app.add_subcommand("train", "Train the fusion head on the manifest's train split");
  train_cmd->add_option("--manifest", tr_manifest)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model", tr_model, "Model file holding PCA and GMM")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr_out)->required();
  train_cmd->add_option("--metrics", tr_metrics, "Per-epoch CSV (epoch,loss,accuracy)");
  train_cmd->add_option("--epochs", tr_cfg.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr_cfg.learning_rate)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--momentum", tr_cfg.momentum)->check(CLI::Range(0.0, 0.999999));
  train_cmd->add_option("--batch-size", tr_cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr_seed, "RNG seed (falls back to MORPHOFV_SEED, then 0)");
  train_cmd->add_option("--visual-hidden", tr_visual_hidden)->check(CLI::PositiveNumber);
  train_cmd->add_option("--text-hidden", tr_text_hidden)->check(CLI::PositiveNumber);
  add_feature_flags(train_cmd, tr_flags);

  // eval
  std::string ev_manifest, ev_model, ev_out, ev_ranked, ev_features, ev_split = "test";
  std::string ev_feature_kind = "probs";
  bool ev_classification = false, ev_retrieval = false;
  auto* eval_cmd = app.add_subcommand("eval", "Classification and/or retrieval mAP");
  eval_cmd->add_option("--manifest", ev_manifest)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", ev_model, "Trained model bundle")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev_out, "Metrics JSON (default: stdout)");
  eval_cmd->add_option("--ranked-csv", ev_ranked, "Write retrieval rankings as CSV");
  eval_cmd->add_option("--split", ev_split)->check(CLI::IsMember({"train", "test", "all"}));
  eval_cmd->add_flag("--classification", ev_classification);
  eval_cmd->add_flag("--retrieval", ev_retrieval);
  eval_cmd->add_option("--retrieval-feature", ev_feature_kind)->check(CLI::IsMember({"probs", "penultimate"}));
  eval_cmd->add_option("--features", ev_features,
                       "FVC1 with one retrieval feature per manifest sample; replaces the model's features")
      ->check(CLI::ExistingFile);

  // validate-manifest
  std::string vm_manifest;
  auto* validate = app.add_subcommand("validate-manifest", "Check a dataset manifest");
  validate->add_option("--manifest", vm_manifest)->required();

  // make-synthetic
  std::string ms_out, ms_layout = "pooled";
  SyntheticConfig ms_cfg;
  std::optional<std::uint64_t> ms_seed;
  auto* synth = app.add_subcommand("make-synthetic", "Write the bundled synthetic four-class dataset");
  synth->add_option("--out", ms_out)->required();
  synth->add_option("--seed", ms_seed);
  synth->add_option("--train-per-class", ms_cfg.train_per_class)->check(CLI::PositiveNumber);
  synth->add_option("--test-per-class", ms_cfg.test_per_class)->check(CLI::PositiveNumber);
  synth->add_option("--layout", ms_layout)->check(CLI::IsMember({"pooled", "map"}));
  synth->add_option("--zero-text-every", ms_cfg.zero_text_every, "Every n-th image gets no words");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*derive) {
      const auto list = derive_bigrams(read_word_list(db_dictionary), db_count);
      std::ostringstream text;
      for (const auto& b : list) text << b << '\n';
      if (db_out.empty())
        out << text.str();
      else
        write_file_bytes(db_out, text.str());
    } else if (*phoc) {
      const Alphabet alphabet = load_alphabet(pe_bigrams);
      if (!pe_word.empty()) {
        const std::string w = normalize_word(pe_word);
        if (w.empty()) throw PreconditionError("word '" + pe_word + "' has no encodable characters");
        const PhocVector p = build_phoc(w, alphabet);
        std::string bits;
        for (std::size_t i = 0; i < kPhocDim; ++i) bits.push_back(p[i] ? '1' : '0');
        out << bits << '\n';
      } else if (!pe_words.empty()) {
        if (pe_out.empty()) throw PreconditionError("phoc-encode --words needs --out");
        VectorTable table;
        table.dim = static_cast<std::uint32_t>(kPhocDim);
        std::size_t dropped = 0;
        for (const auto& raw : read_word_list(pe_words)) {
          const std::string w = normalize_word(raw);
          if (w.empty()) {
            ++dropped;
            continue;
          }
          const PhocVector p = build_phoc(w, alphabet);
          std::vector<double> row(p.bits.begin(), p.bits.end());
          table.append(row);
        }
        write_fvc(pe_out, table);
        err << "phoc-encode: " << table.rows << " words encoded, " << dropped << " dropped as empty\n";
      } else {
        throw PreconditionError("phoc-encode needs --word or --words");
      }
    } else if (*pca_cmd) {
      save_model(fit_pca_bundle(pca_opts, err), pca_out);
    } else if (*gmm_cmd) {
      ModelBundle b = load_model(gmm_model);
      if (!b.pca) throw PreconditionError(gmm_model + " holds no PCA model");
      fit_gmm_into(b, gmm_opts, err);
      save_model(b, gmm_out);
    } else if (*fit_cmd) {
      ModelBundle b = fit_pca_bundle(fit_opts, err);
      fit_gmm_into(b, fit_opts, err);
      save_model(b, fit_out);
    } else if (*encode) {
      const DatasetManifest m = load_manifest(ef_manifest);
      const ModelBundle b = load_model(ef_model);
      VectorTable table;
      table.dim = static_cast<std::uint32_t>(fisher_dim(b.gmm ? b.gmm->dim() : 0, b.gmm ? b.gmm->components() : 0));
      std::size_t empty = 0;
      for (const auto& fv : encode_manifest(m, b, ef_flags.settings())) {
        if (fv.values.isZero(0.0)) ++empty;
        table.append(std::span<const double>(fv.values.data(), static_cast<std::size_t>(fv.values.size())));
      }
      write_fvc(ef_out, table);
      err << "encode-fv: " << table.rows << " vectors of dimension " << table.dim << ", " << empty
          << " without text\n";
    } else if (*train_cmd) {
      const DatasetManifest m = load_manifest(tr_manifest);
      ModelBundle b = load_model(tr_model);
      if (!b.pca || !b.gmm) throw PreconditionError(tr_model + " needs PCA and GMM members (run fit first)");
      const FeatureSettings settings = tr_flags.settings();
      const LabeledDataset data = build_dataset(m, b, settings, Split::Train);
      if (data.samples.empty()) throw PreconditionError("manifest has no train samples");
      tr_cfg.seed = resolve_seed(tr_seed);
      FusionConfig net;
      net.visual_dim = m.visual.channels;
      net.visual_hidden = tr_visual_hidden;
      net.text_dim = fisher_dim(b.gmm->dim(), b.gmm->components());
      net.text_hidden = tr_text_hidden;
      net.num_classes = static_cast<Eigen::Index>(m.classes.size());
      const TrainResult result = train(data, tr_cfg, net, tr_cfg.seed);
      b.fusion = result.params;
      b.config["features"] = settings.to_json();
      b.config["classes"] = m.classes;
      b.config["train"] = {{"epochs", tr_cfg.epochs},          {"batch_size", tr_cfg.batch_size},
                           {"learning_rate", tr_cfg.learning_rate}, {"momentum", tr_cfg.momentum},
                           {"lr_decay", tr_cfg.lr_decay},      {"lr_decay_every", tr_cfg.lr_decay_every},
                           {"seed", tr_cfg.seed},              {"samples", data.samples.size()}};
      save_model(b, tr_out);
      std::string csv = "epoch,loss,accuracy\n";
      for (const auto& e : result.history)
        csv += std::to_string(e.epoch) + "," + fmt_double(e.loss) + "," + fmt_double(e.accuracy) + "\n";
      if (!tr_metrics.empty()) write_file_bytes(tr_metrics, csv);
      const auto& last = result.history.back();
      err << "train: " << data.samples.size() << " samples, final loss " << last.loss << ", accuracy "
          << last.accuracy << "\n";
    } else if (*eval_cmd) {
      if (!ev_classification && !ev_retrieval) ev_classification = ev_retrieval = true;
      const DatasetManifest m = load_manifest(ev_manifest);
      std::optional<Split> split;
      if (ev_split == "train") split = Split::Train;
      if (ev_split == "test") split = Split::Test;
      std::vector<std::size_t> chosen;
      for (std::size_t i = 0; i < m.samples.size(); ++i)
        if (!split || m.samples[i].split == *split) chosen.push_back(i);
      if (chosen.empty()) throw PreconditionError("no samples in split '" + ev_split + "'");

      std::vector<int> labels;
      std::vector<std::string> ids;
      for (std::size_t i : chosen) {
        labels.push_back(m.samples[i].label_index);
        ids.push_back(m.samples[i].id);
      }
      std::vector<Eigen::VectorXd> probs, penultimate;
      const bool need_model = ev_classification || (ev_retrieval && ev_features.empty());
      if (need_model) {
        if (ev_model.empty()) throw PreconditionError("eval needs --model");
        const ModelBundle b = load_model(ev_model);
        if (!b.fusion) throw PreconditionError(ev_model + " holds no trained fusion head");
        if (b.fusion->config.num_classes != static_cast<Eigen::Index>(m.classes.size()))
          throw DimensionError("model was trained for a different number of classes");
        const FeatureSettings settings =
            b.config.contains("features") ? FeatureSettings::from_json(b.config["features"]) : FeatureSettings{};
        const LabeledDataset data = build_dataset(m, b, settings, split);
        for (const auto& s : data.samples) {
          const ForwardTrace tr = forward_trace(s, *b.fusion);
          probs.push_back(tr.probs);
          penultimate.push_back(tr.fused);
        }
      }
      nlohmann::json report;
      report["split"] = ev_split;
      report["samples"] = chosen.size();
      if (ev_classification) {
        const auto cls = map_classification(probs, labels, ids, static_cast<int>(m.classes.size()));
        nlohmann::json per_class = nlohmann::json::object();
        for (std::size_t c = 0; c < m.classes.size(); ++c)
          per_class[m.classes[c]] = cls.class_ap[c] ? nlohmann::json(*cls.class_ap[c]) : nlohmann::json();
        std::size_t correct = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          Eigen::Index arg = 0;
          probs[i].maxCoeff(&arg);
          correct += arg == labels[i] ? 1 : 0;
        }
        std::vector<std::string> skipped;
        for (int c : cls.skipped_classes) skipped.push_back(m.classes[static_cast<std::size_t>(c)]);
        report["classification"] = {{"mAP", cls.mean_ap},
                                    {"accuracy", static_cast<double>(correct) / static_cast<double>(probs.size())},
                                    {"per_class_ap", per_class},
                                    {"skipped_classes", skipped}};
      }
      if (ev_retrieval) {
        std::vector<RetrievalFeature> feats;
        std::string kind = ev_feature_kind;
        if (!ev_features.empty()) {
          const VectorTable table = read_fvc(ev_features);
          if (table.rows != m.samples.size())
            throw DimensionError("--features has " + std::to_string(table.rows) + " rows, manifest has " +
                                 std::to_string(m.samples.size()) + " samples");
          for (std::size_t i : chosen) {
            const auto r = table.row(i);
            Eigen::VectorXd v(static_cast<Eigen::Index>(r.size()));
            for (std::size_t j = 0; j < r.size(); ++j) v[static_cast<Eigen::Index>(j)] = r[j];
            feats.push_back({m.samples[i].id, v});
          }
          kind = "file";
        } else {
          const auto& src = ev_feature_kind == "probs" ? probs : penultimate;
          for (std::size_t i = 0; i < chosen.size(); ++i) feats.push_back({ids[i], src[i]});
        }
        const auto ret = map_retrieval(feats, labels, !ev_ranked.empty());
        nlohmann::json per_query = nlohmann::json::object();
        for (const auto& q : ret.queries) per_query[q.id] = q.ap ? nlohmann::json(*q.ap) : nlohmann::json();
        report["retrieval"] = {{"mAP", ret.mean_ap},
                               {"feature", kind},
                               {"per_query_ap", per_query},
                               {"skipped_queries", ret.skipped}};
        if (!ev_ranked.empty()) {
          std::string csv = "query_id,rank,item_id,score,relevant\n";
          for (const auto& list : ret.rankings)
            for (std::size_t r = 0; r < list.items.size(); ++r)
              csv += list.query_id + "," + std::to_string(r + 1) + "," + list.items[r].id + "," +
                     fmt_double(list.items[r].score) + "," + (list.items[r].relevant ? "1" : "0") + "\n";
          write_file_bytes(ev_ranked, csv);
        }
      }
      const std::string text = report.dump(2) + "\n";
      if (ev_out.empty())
        out << text;
      else
        write_file_bytes(ev_out, text);
    } else if (*validate) {
      const DatasetManifest m = load_manifest(vm_manifest);
      std::size_t train_n = 0;
      for (const auto& s : m.samples) train_n += s.split == Split::Train ? 1 : 0;
      out << "ok: " << m.samples.size() << " samples (" << train_n << " train, " << m.samples.size() - train_n
          << " test), " << m.classes.size() << " classes\n";
    } else if (*synth) {
      ms_cfg.seed = resolve_seed(ms_seed);
      if (ms_layout == "map") ms_cfg.visual = VisualLayout{true, 8, 2, 2};
      write_synthetic(make_synthetic(ms_cfg), ms_out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace morphofv
