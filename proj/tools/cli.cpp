#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <variant>

#include "config_file.hpp"
#include "scr/distance.hpp"
#include "scr/error.hpp"
#include "scr/evaluator.hpp"
#include "scr/feature_store.hpp"
#include "scr/quantizer.hpp"
#include "scr/ranker.hpp"
#include "scr/trainer.hpp"

namespace scr::cli {
namespace {

namespace fs = std::filesystem;

const CLI::Validator kWritablePath(
    [](std::string& value) -> std::string {
      if (value.empty()) return "output path is empty";
      const auto parent = fs::path(value).parent_path();
      if (!parent.empty() && !fs::is_directory(parent)) {
        return "directory '" + parent.string() + "' does not exist";
      }
      return {};
    },
    "WRITABLE");

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<DistanceKind> parse_pipelines(const std::string& text) {
  std::vector<DistanceKind> out;
  for (const auto& name : split_list(text)) out.push_back(parse_distance_kind(name));
  if (out.empty()) throw ArgumentError("no pipeline selected");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("sizes", "'" + item + "' is not a number");
    }
    if (!(v >= 1.0) || v != std::floor(v)) {
      throw ValidationError("sizes", "'" + item + "' is not a positive integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ValidationError("sizes", "no gallery size given");
  return out;
}

/// Loads `.fvs` features, projecting them when an embedder is given.
FeatureSet load_inputs(const std::string& path, const std::optional<EmbedderParams>& params) {
  auto set = load_features(path);
  return params ? embed(set, *params) : set;
}

std::optional<EmbedderParams> maybe_params(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_params(path);
}

void write_or_print(const std::string& path, std::ostream& out,
                    const std::function<void(std::ostream&)>& writer) {
  if (path.empty()) {
    writer(out);
    return;
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  writer(file);
  if (!file) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  SynthSpec spec;
  bool normalize = false;
  std::string out;
};

void add_gen(CLI::App& app, GenArgs& a) {
  app.add_option("--ids", a.spec.num_identities, "Number of identities");
  app.add_option("--per-id", a.spec.instances_per_identity, "Instances per identity");
  app.add_option("--dim", a.spec.dim, "Embedding dimension D");
  app.add_option("--stddev", a.spec.cluster_stddev, "Per-identity noise standard deviation");
  app.add_option("--separation", a.spec.identity_separation, "Side of the identity-mean hypercube");
  app.add_option("--cameras", a.spec.num_cameras, "Number of cameras (>= 2)");
  app.add_option("--seed", a.spec.rng_seed, "RNG seed");
  app.add_flag("--normalize", a.normalize, "Scale rows to unit L2 norm");
  app.add_option("--out", a.out, "Output .fvs path")->required()->check(kWritablePath);
}

int run_gen(const GenArgs& a, std::ostream& out) {
  auto set = generate_synthetic(a.spec);
  if (a.normalize) set = l2_normalize(set);
  save_features(set, a.out);
  out << "wrote " << a.out << ": N=" << set.size() << " D=" << set.dim()
      << " ids=" << set.num_identities() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- split

struct SplitArgs {
  std::string features;
  double fraction = 0.2;
  std::uint64_t seed = 0;
  std::string query_out;
  std::string gallery_out;
};

void add_split(CLI::App& app, SplitArgs& a) {
  app.add_option("--features", a.features, "Input .fvs")->required()->check(CLI::ExistingFile);
  app.add_option("--query-fraction", a.fraction, "Per-identity fraction sent to the query split");
  app.add_option("--seed", a.seed, "RNG seed");
  app.add_option("--query-out", a.query_out, "Query .fvs")->required()->check(kWritablePath);
  app.add_option("--gallery-out", a.gallery_out, "Gallery .fvs")->required()->check(kWritablePath);
}

int run_split(const SplitArgs& a, std::ostream& out) {
  const auto [query, gallery] = split_query_gallery(load_features(a.features), a.fraction, a.seed);
  save_features(query, a.query_out);
  save_features(gallery, a.gallery_out);
  out << "query N=" << query.size() << ", gallery N=" << gallery.size() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string features;
  TrainConfig config;
  std::string out_codebook;
  std::string out_params;
  std::string log;
  std::string out_embedded;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto& c = a.config;
  app.add_option("--features", a.features, "Training .fvs")->required()->check(CLI::ExistingFile);
  app.add_option("--epochs", c.epochs, "Training epochs");
  app.add_option("--batch-size", c.batch_size, "Batch size P*K");
  app.add_option("--per-batch-id", c.instances_per_identity, "Instances per identity in a batch (K)");
  app.add_option("--lr", c.lr.base, "Initial learning rate");
  app.add_option("--warmup", c.lr.warmup_epochs, "Linear warm-up epochs");
  app.add_option("--margin", c.margin, "Triplet margin");
  app.add_option("--alpha", c.alpha, "Consistency regularization weight");
  app.add_option("-T,--refresh-period", c.refresh_period, "Codebook refresh period in epochs");
  app.add_option("-M,--subspaces", c.num_subspaces, "Number of sub-spaces");
  app.add_option("-C,--centroids", c.num_centroids, "Centroids per sub-space");
  app.add_flag("--int-mode", c.int_mode, "Regularize against the 8-bit table");
  app.add_option("--embedding-dim", c.embedding_dim, "Output dimension (0 keeps input D)");
  app.add_option("--kmeans-iters", c.kmeans_iters, "Lloyd iterations per (re)clustering");
  app.add_option("--seed", c.rng_seed, "RNG seed");
  app.add_option("--out-codebook", a.out_codebook, "Output .cbk")->check(kWritablePath);
  app.add_option("--out-params", a.out_params, "Output embedder parameters")->check(kWritablePath);
  app.add_option("--log", a.log, "Per-epoch CSV log")->check(kWritablePath);
  app.add_option("--out-embedded", a.out_embedded, "Projected training features (.fvs)")
      ->check(kWritablePath);
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const auto& c = a.config;
  c.validate();
  out << "train: epochs=" << c.epochs << " batch=" << c.batch_size << " lr=" << c.lr.base
      << " T=" << c.refresh_period << " alpha=" << c.alpha << " margin=" << c.margin
      << " M=" << c.num_subspaces << " C=" << c.num_centroids
      << " int_mode=" << (c.int_mode ? "true" : "false") << " seed=" << c.rng_seed << "\n";
  const auto features = load_features(a.features);
  const auto result = run_training(features, c);
  for (const auto& w : result.log.warnings) out << "warning: " << w << "\n";
  for (const auto& r : result.log.refreshes) {
    out << "refresh after epoch " << r.epoch << ": quantization error " << r.error_before
        << " -> " << r.error_after << "\n";
  }
  const auto& last = result.log.epochs.back();
  out << "final epoch " << last.epoch << ": total=" << last.loss.total << " ce=" << last.loss.ce
      << " triplet=" << last.loss.triplet << " consistency=" << last.loss.consistency << "\n";
  if (!a.out_codebook.empty()) save_codebook(result.codebook, a.out_codebook);
  if (!a.out_params.empty()) save_params(result.params, a.out_params);
  if (!a.out_embedded.empty()) save_features(embed(features, result.params), a.out_embedded);
  if (!a.log.empty()) write_or_print(a.log, out, [&](std::ostream& s) { result.log.write_csv(s); });
  return kSuccess;
}

// ---------------------------------------------------------------- build

struct BuildArgs {
  std::string features;
  std::string params;
  std::string codebook;
  KMeansOptions kmeans;
  std::string out_prefix;
};

void add_build(CLI::App& app, BuildArgs& a) {
  app.add_option("--features", a.features, "Gallery .fvs")->required()->check(CLI::ExistingFile);
  app.add_option("--params", a.params, "Embedder parameters applied first")
      ->check(CLI::ExistingFile);
  app.add_option("--codebook", a.codebook, "Reuse this .cbk instead of clustering")
      ->check(CLI::ExistingFile);
  app.add_option("-M,--subspaces", a.kmeans.num_subspaces, "Number of sub-spaces");
  app.add_option("-C,--centroids", a.kmeans.num_centroids, "Centroids per sub-space");
  app.add_option("--kmeans-iters", a.kmeans.max_iters, "Maximum Lloyd iterations");
  app.add_option("--tol", a.kmeans.tol, "Relative improvement stopping threshold");
  app.add_option("--seed", a.kmeans.rng_seed, "RNG seed");
  app.add_option("--out-prefix", a.out_prefix,
                 "Writes PREFIX.cbk, PREFIX.pqc, PREFIX.lut and PREFIX.int.lut")
      ->required()
      ->check(kWritablePath);
}

int run_build(const BuildArgs& a, std::ostream& out) {
  const auto gallery = load_inputs(a.features, maybe_params(a.params));
  std::optional<Codebook> codebook;
  if (!a.codebook.empty()) {
    codebook = load_codebook(a.codebook);
  } else {
    auto [trained, report] = train_codebook(gallery, a.kmeans);
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    out << "k-means: " << report.iterations_run << " iterations, quantization error "
        << report.total_quantization_error << "\n";
    codebook = std::move(trained);
  }
  const auto codes = encode(gallery, *codebook);
  const auto lut = build_lut(*codebook);
  const auto int_lut = quantize_lut(lut);
  save_codebook(*codebook, a.out_prefix + ".cbk");
  save_codes(codes, a.out_prefix + ".pqc");
  save_lut(lut, a.out_prefix + ".lut");
  save_lut(int_lut, a.out_prefix + ".int.lut");
  out << "code length: " << codebook->code_bits() << " bits (M=" << codebook->num_subspaces()
      << ", C=" << codebook->num_centroids() << ")\n"
      << "gallery N=" << codes.rows() << ", table scale " << int_lut.scale() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- search

struct SearchArgs {
  std::string gallery;
  std::string queries;
  std::string params;
  std::string index;
  std::string codebook;
  std::string codes;
  std::string lut;
  std::string int_lut;
  std::string pipeline = "intscr";
  std::size_t hamming_bits = 0;
  std::size_t topk = 10;
  std::string out;
};

void add_search(CLI::App& app, SearchArgs& a) {
  app.add_option("--gallery", a.gallery, "Gallery .fvs")->required()->check(CLI::ExistingFile);
  app.add_option("--queries", a.queries, "Query .fvs")->required()->check(CLI::ExistingFile);
  app.add_option("--params", a.params, "Embedder parameters")->check(CLI::ExistingFile);
  app.add_option("--index", a.index, "Artifact prefix written by `build`");
  app.add_option("--codebook", a.codebook, "Codebook .cbk (overrides --index)");
  app.add_option("--codes", a.codes, "Gallery codes .pqc (overrides --index)");
  app.add_option("--lut", a.lut, "Real table .lut (overrides --index)");
  app.add_option("--int-lut", a.int_lut, "Integer table .lut (overrides --index)");
  app.add_option("--pipeline", a.pipeline, "exact | scr | intscr | hamming");
  app.add_option("--hamming-bits", a.hamming_bits, "Sign bits for hamming (0: one per dimension)");
  app.add_option("--topk", a.topk, "Rows printed per query");
  app.add_option("--out", a.out, "CSV output (default: stdout)")->check(kWritablePath);
}

std::string artifact(const std::string& explicit_path, const std::string& prefix,
                     const char* suffix, const char* what) {
  if (!explicit_path.empty()) return explicit_path;
  if (prefix.empty()) {
    throw ArgumentError(std::string("pipeline needs ") + what + "; pass --index or --" + what);
  }
  return prefix + suffix;
}

void check_shape(const char* a_name, std::size_t a_m, std::size_t a_c, const char* b_name,
                 std::size_t b_m, std::size_t b_c) {
  if (a_m != b_m || a_c != b_c) {
    throw ConfigError(std::string("artifact mismatch: ") + a_name + " has M=" +
                      std::to_string(a_m) + " C=" + std::to_string(a_c) + " but " + b_name +
                      " has M=" + std::to_string(b_m) + " C=" + std::to_string(b_c));
  }
}

int run_search(const SearchArgs& a, std::ostream& out) {
  const auto kind = parse_distance_kind(a.pipeline);
  const auto params = maybe_params(a.params);
  auto gallery_features = load_inputs(a.gallery, params);
  auto query_features = load_inputs(a.queries, params);
  if (a.topk == 0 || a.topk > gallery_features.size()) {
    throw ArgumentError("--topk must lie in [1, " + std::to_string(gallery_features.size()) + "]");
  }

  SearchTables tables;
  std::optional<Codebook> codebook;
  std::optional<CodeMatrix> gallery_codes;
  if (kind == DistanceKind::scr || kind == DistanceKind::int_scr) {
    codebook = load_codebook(artifact(a.codebook, a.index, ".cbk", "codebook"));
    gallery_codes = load_codes(artifact(a.codes, a.index, ".pqc", "codes"));
    check_shape("codes", gallery_codes->num_subspaces(), gallery_codes->num_centroids(),
                "codebook", codebook->num_subspaces(), codebook->num_centroids());
    if (gallery_codes->rows() != gallery_features.size()) {
      throw ConfigError("artifact mismatch: codes have " + std::to_string(gallery_codes->rows()) +
                        " rows but the gallery has " + std::to_string(gallery_features.size()));
    }
    if (codebook->dim() != query_features.dim()) {
      throw ConfigError("artifact mismatch: codebook dimension " +
                        std::to_string(codebook->dim()) + " != query dimension " +
                        std::to_string(query_features.dim()));
    }
    const bool want_int = kind == DistanceKind::int_scr;
    auto table = load_lut(want_int ? artifact(a.int_lut, a.index, ".int.lut", "int-lut")
                                   : artifact(a.lut, a.index, ".lut", "lut"));
    if (want_int) {
      if (!std::holds_alternative<IntLUT>(table)) {
        throw ConfigError("artifact mismatch: --int-lut holds a real-valued table");
      }
      tables.int_lut = std::get<IntLUT>(std::move(table));
      check_shape("codes", gallery_codes->num_subspaces(), gallery_codes->num_centroids(),
                  "look-up table", tables.int_lut->num_subspaces(),
                  tables.int_lut->num_centroids());
    } else {
      if (!std::holds_alternative<DistanceLUT>(table)) {
        throw ConfigError("artifact mismatch: --lut holds an integer table");
      }
      tables.lut = std::get<DistanceLUT>(std::move(table));
      check_shape("codes", gallery_codes->num_subspaces(), gallery_codes->num_centroids(),
                  "look-up table", tables.lut->num_subspaces(), tables.lut->num_centroids());
    }
  }

  const std::size_t bits = kind == DistanceKind::hamming
                               ? (a.hamming_bits ? a.hamming_bits : gallery_features.dim())
                               : 0;
  EncodedSet query = encode_set(std::move(query_features), codebook ? &*codebook : nullptr, bits);
  EncodedSet gallery{std::move(gallery_features), std::move(gallery_codes), std::nullopt};
  if (bits) gallery.bits = binarize(gallery.features, bits);
  if (query.features.dim() != gallery.features.dim()) {
    throw ConfigError("query dimension " + std::to_string(query.features.dim()) +
                      " != gallery dimension " + std::to_string(gallery.features.dim()));
  }

  const auto ranker = default_ranker(kind);
  std::optional<CountingRanker> counting;
  if (ranker == RankAlgorithm::counting) counting.emplace(max_distance(kind, gallery, tables));

  write_or_print(a.out, out, [&](std::ostream& s) {
    s << "query,rank,gallery_index,person_id,camera_id,distance\n";
    s.precision(9);
    for (std::size_t q = 0; q < query.features.size(); ++q) {
      const auto row = compute_distance_row(kind, query, q, gallery, tables);
      const auto ranked = top_k(counting ? counting->rank(row) : comparison_sort_rank(row), a.topk);
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto g = ranked.order[r];
        s << q << ',' << r + 1 << ',' << g << ',' << gallery.features.person_ids()[g] << ','
          << gallery.features.camera_ids()[g] << ',' << ranked.distances[r] << '\n';
      }
    }
  });
  return kSuccess;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string features;
  double query_fraction = 0.2;
  std::string query;
  std::string gallery;
  std::string params;
  KMeansOptions kmeans;
  std::string pipelines = "exact,scr,intscr,hamming";
  std::size_t hamming_bits = 0;
  std::string out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* f = app.add_option("--features", a.features, "Labeled .fvs split into query/gallery")
                ->check(CLI::ExistingFile);
  app.add_option("--query-fraction", a.query_fraction, "Query fraction per identity");
  auto* q = app.add_option("--query", a.query, "Query .fvs")->check(CLI::ExistingFile);
  auto* g = app.add_option("--gallery", a.gallery, "Gallery .fvs")->check(CLI::ExistingFile);
  f->excludes(q)->excludes(g);
  q->needs(g);
  g->needs(q);
  app.add_option("--params", a.params, "Embedder parameters")->check(CLI::ExistingFile);
  app.add_option("-M,--subspaces", a.kmeans.num_subspaces, "Number of sub-spaces");
  app.add_option("-C,--centroids", a.kmeans.num_centroids, "Centroids per sub-space");
  app.add_option("--kmeans-iters", a.kmeans.max_iters, "Maximum Lloyd iterations");
  app.add_option("--seed", a.kmeans.rng_seed, "RNG seed (split and k-means)");
  app.add_option("--pipelines", a.pipelines, "Comma-separated: exact,scr,intscr,hamming");
  app.add_option("--hamming-bits", a.hamming_bits, "Sign bits (0: same as the PQ code length)");
  app.add_option("--out", a.out, "EvalReport CSV path")->check(kWritablePath);
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.features.empty() && a.query.empty()) {
    throw ArgumentError("pass either --features or --query/--gallery");
  }
  const auto kinds = parse_pipelines(a.pipelines);
  const auto params = maybe_params(a.params);
  std::optional<FeatureSet> query_set, gallery_set;
  if (!a.features.empty()) {
    auto [q, g] = split_query_gallery(load_inputs(a.features, params), a.query_fraction,
                                      a.kmeans.rng_seed);
    query_set.emplace(std::move(q));
    gallery_set.emplace(std::move(g));
  } else {
    query_set.emplace(load_inputs(a.query, params));
    gallery_set.emplace(load_inputs(a.gallery, params));
  }

  const bool needs_codes = std::any_of(kinds.begin(), kinds.end(), [](DistanceKind k) {
    return k == DistanceKind::scr || k == DistanceKind::int_scr;
  });
  std::optional<Codebook> codebook;
  SearchTables tables;
  if (needs_codes) {
    auto [trained, report] = train_codebook(*gallery_set, a.kmeans);
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    codebook = std::move(trained);
    tables.lut = build_lut(*codebook);
    tables.int_lut = quantize_lut(*tables.lut);
  }
  std::size_t bits = 0;
  if (std::find(kinds.begin(), kinds.end(), DistanceKind::hamming) != kinds.end()) {
    bits = a.hamming_bits ? a.hamming_bits
                          : a.kmeans.num_subspaces *
                                static_cast<std::size_t>(std::ceil(std::log2(
                                    double(std::max<std::size_t>(a.kmeans.num_centroids, 2)))));
  }
  const auto query = encode_set(std::move(*query_set), codebook ? &*codebook : nullptr, bits);
  const auto gallery = encode_set(std::move(*gallery_set), codebook ? &*codebook : nullptr, bits);

  std::vector<EvalReport> reports;
  for (auto kind : kinds) {
    reports.push_back(evaluate(query, gallery, tables, kind, default_ranker(kind)));
  }
  write_eval_table(reports, out);
  out << "\n";
  write_eval_csv(reports, out);
  if (!a.out.empty()) write_or_print(a.out, out, [&](std::ostream& s) { write_eval_csv(reports, s); });
  return kSuccess;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string sizes = "1e3,1e4,1e5";
  std::string pipelines = "exact,scr,intscr,hamming";
  BenchConfig config;
  std::size_t mem_limit_mb = 0;
  std::string out;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto& c = a.config;
  app.add_option("--sizes", a.sizes, "Comma-separated gallery sizes, e.g. 1e3,1e4,1e6");
  app.add_option("--pipelines", a.pipelines, "Comma-separated: exact,scr,intscr,hamming");
  app.add_option("--dim", c.dim, "Feature dimension D");
  app.add_option("-M,--subspaces", c.num_subspaces, "Number of sub-spaces");
  app.add_option("-C,--centroids", c.num_centroids, "Centroids per sub-space");
  app.add_option("--hamming-bits", c.hamming_bits, "Sign bits (0: same as the PQ code length)");
  app.add_option("--queries", c.num_queries, "Timed queries per configuration (>= 10 advised)");
  app.add_option("--warmup", c.warmup_passes, "Untimed warm-up passes");
  app.add_option("--train-sample", c.train_sample, "Gallery rows used to train the codebook");
  app.add_option("--kmeans-iters", c.kmeans_iters, "Lloyd iterations");
  app.add_option("--mem-limit-mb", a.mem_limit_mb, "Skip sizes above this footprint");
  app.add_option("--seed", c.rng_seed, "RNG seed");
  app.add_option("--out", a.out, "BenchReport CSV path")->check(kWritablePath);
}

int run_bench(BenchArgs a, std::ostream& out) {
  const auto sizes = parse_sizes(a.sizes);
  const auto kinds = parse_pipelines(a.pipelines);
  a.config.memory_limit_bytes = a.mem_limit_mb << 20;
  const auto report = bench_ranking(sizes, kinds, a.config);
  report.write_table(out);
  out << "\n";
  report.write_csv(out);
  if (!a.out.empty()) write_or_print(a.out, out, [&](std::ostream& s) { report.write_csv(s); });
  return kSuccess;
}

/// Expands `--config FILE` into `--key=value` tokens placed ahead of the
/// explicit flags, so flags given on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.size() < 2) return args;
  auto* sub = app.get_subcommand_no_throw(args[1]);
  std::vector<std::string> rest;
  std::optional<std::string> config;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config", 1, 0);
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config) return args;
  if (!sub) throw CLI::ExtrasError({args[1]});
  if (!fs::is_regular_file(*config)) {
    throw CLI::ValidationError("--config", "File does not exist: " + *config);
  }
  std::vector<std::string> out{args[0], args[1]};
  for (const auto& [key, value] : read_config_file(*config)) {
    const std::string flag = (key.size() == 1 ? "-" : "--") + key;
    if (!sub->get_option_no_throw(flag)) {
      throw CLI::ValidationError("--config", "unknown key '" + key + "' in " + *config);
    }
    if (key.size() == 1) {
      out.push_back(flag);
      out.push_back(value);
    } else {
      out.push_back(flag + "=" + value);
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sub-space quantized retrieval: synthesize, train, index, search and evaluate."};
  app.name(args.empty() ? "scr" : fs::path(args[0]).filename().string());
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  GenArgs gen;
  SplitArgs split;
  TrainArgs train;
  BuildArgs build;
  SearchArgs search;
  EvalArgs eval;
  BenchArgs bench;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic labeled feature set (.fvs)");
  auto* split_cmd = app.add_subcommand("split", "Split a feature set into query and gallery");
  auto* train_cmd = app.add_subcommand("train", "Train the embedder with periodic re-clustering");
  auto* build_cmd = app.add_subcommand("build", "Build codebook, codes and look-up tables");
  auto* search_cmd = app.add_subcommand("search", "Rank a gallery for each query");
  auto* eval_cmd = app.add_subcommand("eval", "Rank-k / mAP evaluation per pipeline");
  auto* bench_cmd = app.add_subcommand("bench", "Per-query distance and ranking timings");
  add_gen(*gen_cmd, gen);
  add_split(*split_cmd, split);
  add_train(*train_cmd, train);
  add_build(*build_cmd, build);
  add_search(*search_cmd, search);
  add_eval(*eval_cmd, eval);
  add_bench(*bench_cmd, bench);
  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    sub->add_option("--config", "key=value file; command-line flags override it");
  }

  try {
    auto expanded = expand_config(args, app);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    if (!reversed.empty()) reversed.pop_back();
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    auto* sub = args.size() > 1 ? app.get_subcommand_no_throw(args[1]) : nullptr;
    err << (sub ? sub->help() : app.help());
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (gen_cmd->parsed()) return run_gen(gen, out);
    if (split_cmd->parsed()) return run_split(split, out);
    if (train_cmd->parsed()) return run_train(train, out);
    if (build_cmd->parsed()) return run_build(build, out);
    if (search_cmd->parsed()) return run_search(search, out);
    if (eval_cmd->parsed()) return run_eval(eval, out);
    if (bench_cmd->parsed()) return run_bench(bench, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace scr::cli
