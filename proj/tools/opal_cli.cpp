// opal: command-line front end.
//
//   opal segment --library cohort.meta --subject s.opal --out out/
//   opal loo     --library cohort.meta --out report/
//   opal phantom --n 20 --seed 1 --out cohort/
//   opal bench   --library cohort.meta --repeats 3 --out bench/
//   opal version
//
// Exit status: 0 ok, 2 configuration error, 3 I/O error, 4 pipeline error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "opal/opal.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitPipeline = 4;

/// Flag values collected from the command line, applied over the config file.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> order;
  bool dump_ann = false;
  bool dump_maps = false;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    order.push_back(key);
    app->add_option(flag, values[key], help);
  }
};

void add_run_options(CLI::App* app, Overrides& o, bool with_subject) {
  app->add_option("--config", o.config_path, "Configuration file (key = value lines)");
  o.add(app, "--library", "library", "Template library manifest (cohort.meta)");
  if (with_subject) {
    o.add(app, "--subject", "subject", "Subject volume (OPALVOL1, float32)");
    o.add(app, "--roi", "roi", "ROI mask (OPALVOL1, uint8); default: dilated union of template labels");
  }
  o.add(app, "--out", "out", "Output directory");
  o.add(app, "--threads", "threads", "Worker threads");
  o.add(app, "--seed", "seed", "Base RNG seed");
  o.add(app, "--k", "k", "Number of independent OPM runs (ANNs per voxel)");
  o.add(app, "--iterations", "iterations", "OPM iterations");
  o.add(app, "--init-window", "init_window", "Initialization window side (odd)");
  o.add(app, "--alpha", "alpha", "Weight normalization alpha");
  o.add(app, "--sigma", "sigma", "Spatial kernel sigma");
  o.add(app, "--epsilon", "epsilon", "h^2 stabilizer epsilon");
  o.add(app, "--scales", "scales", "Patch sizes, comma separated (e.g. 3,5)");
  o.add(app, "--features", "features", "Features, comma separated (intensity,gradnorm)");
  o.add(app, "--roi-dilation", "roi_dilation", "Dilation radius of the default ROI");
  app->add_flag("--dump-ann", o.dump_ann, "Write ANN field dumps");
  app->add_flag("--dump-maps", o.dump_maps, "Write per-estimator maps");
}

opal::RunConfig build_config(CLI::App* app, const Overrides& o) {
  opal::RunConfig cfg;
  if (!o.config_path.empty()) {
    try {
      cfg = opal::load_config(o.config_path);
    } catch (const opal::IoError& e) {
      throw opal::ConfigError(e.what());
    }
  }
  for (const auto& key : o.order) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (app->count(flag) > 0) opal::apply_setting(cfg, key, o.values.at(key));
  }
  if (o.dump_ann) cfg.dump_ann = true;
  if (o.dump_maps) cfg.dump_maps = true;
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw opal::ConfigError(std::string("missing required setting '") + what + "'");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw opal::IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string estimator_tag(const opal::EstimatorResult& e) {
  return "s" + std::to_string(e.scale.size()) + "_" + opal::to_string(e.feature);
}

std::vector<std::string> seed_notes(const opal::SegmentResult& res) {
  std::vector<std::string> notes;
  for (const auto& e : res.estimators) notes.push_back("estimator " + estimator_tag(e) + " seed=" + std::to_string(e.seed));
  return notes;
}

std::string timings_text(const opal::StageTimings& t) {
  std::ostringstream os;
  os << "features_seconds=" << t.features << "\nann_search_seconds=" << t.ann_search
     << "\nfusion_seconds=" << t.fusion << "\naggregation_seconds=" << t.aggregation
     << "\ntotal_seconds=" << t.total << '\n';
  return os.str();
}

opal::RoiMask resolve_roi(const opal::RunConfig& cfg, const opal::TemplateLibrary& lib) {
  if (!cfg.roi.empty()) return opal::read_mask(cfg.roi);
  const auto labels = lib.label_views();
  return opal::default_roi(labels, cfg.roi_dilation, cfg.estimators.max_radius());
}

int cmd_segment(const opal::RunConfig& cfg) {
  require(cfg.library, "library");
  require(cfg.subject, "subject");
  require(cfg.out, "out");
  const auto lib = opal::read_library(cfg.library);
  const auto subject = opal::read_volume(cfg.subject);
  const auto roi = resolve_roi(cfg, lib);
  make_dir(cfg.out);

  const auto res = opal::segment(subject, lib, roi, cfg.estimators, cfg.opm, cfg.fusion,
                                 {cfg.threads, cfg.dump_ann});
  const fs::path out = cfg.out;
  opal::write_volume(out / "labels.opal", res.labels);
  opal::write_volume(out / "estimator.opal", res.estimator.to_volume());
  opal::write_text(out / "run.meta", opal::format_run_meta(cfg, seed_notes(res)));
  opal::write_text(out / "timings.meta", timings_text(res.timings));
  for (const auto& e : res.estimators) {
    if (cfg.dump_maps) opal::write_volume(out / ("estimator_" + estimator_tag(e) + ".opal"), e.map.to_volume());
    if (cfg.dump_ann && e.field) {
      std::ostringstream os;
      opal::write_ann_dump(os, *e.field);
      opal::write_text(out / ("ann_" + estimator_tag(e) + ".txt"), os.str());
    }
  }
  std::cout << "segment: " << opal::count_nonzero(res.labels) << " voxels labeled ("
            << opal::structure_volume(res.labels, subject.spacing()) << " mm3), " << res.timings.total << " s\n";
  return 0;
}

int cmd_loo(const opal::RunConfig& cfg) {
  require(cfg.library, "library");
  require(cfg.out, "out");
  const auto cohort = opal::read_library(cfg.library);
  if (cohort.size() < 2) throw opal::ConfigError("leave-one-out needs at least 2 subjects, cohort has " +
                                                 std::to_string(cohort.size()));
  make_dir(cfg.out);
  const auto report = opal::leave_one_out(cohort, cfg.estimators, cfg.opm, cfg.fusion,
                                          {cfg.threads, cfg.roi_dilation});
  const fs::path out = cfg.out;
  opal::write_text(out / "subjects.csv", report.csv());
  opal::write_text(out / "report.meta", report.summary_text());
  opal::write_text(out / "timings.meta", report.timings_text());
  opal::write_text(out / "run.meta", opal::format_run_meta(cfg));
  std::cout << "loo: " << report.subjects.size() << " subjects, median Dice " << report.median_dice
            << ", mean Dice " << report.mean_dice << " +- " << report.std_dice << ", " << report.timings.total
            << " s\n";
  return 0;
}

struct BenchSeries {
  std::vector<opal::StageTimings> runs;

  double median_total() const {
    std::vector<double> t;
    for (const auto& r : runs) t.push_back(r.total);
    std::sort(t.begin(), t.end());
    return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
  }
};

BenchSeries bench_library(const opal::RunConfig& cfg, const opal::TemplateLibrary& lib) {
  // Without an explicit subject, the first template is segmented by the others.
  opal::TemplateLibrary search = lib;
  opal::Volume3 subject;
  if (!cfg.subject.empty()) {
    subject = opal::read_volume(cfg.subject);
  } else {
    if (lib.size() < 2) throw opal::ConfigError("bench without --subject needs at least 2 templates");
    subject = *lib[0].image;
    search = lib.without(0);
  }
  const opal::FeatureLibrary features(search, cfg.estimators.features, cfg.threads);
  const auto roi = resolve_roi(cfg, search);
  BenchSeries series;
  for (int m = 0; m < cfg.repeats; ++m) {
    series.runs.push_back(
        opal::segment(subject, features, roi, cfg.estimators, cfg.opm, cfg.fusion, {cfg.threads, false}).timings);
  }
  return series;
}

int cmd_bench(const opal::RunConfig& cfg) {
  require(cfg.library, "library");
  require(cfg.out, "out");
  const auto lib = opal::read_library(cfg.library);
  make_dir(cfg.out);
  const auto base = bench_library(cfg, lib);

  std::ostringstream csv;
  csv << "library,run,ann_search_seconds,fusion_seconds,aggregation_seconds,total_seconds\n";
  auto rows = [&](const char* name, const BenchSeries& s) {
    for (std::size_t i = 0; i < s.runs.size(); ++i) {
      const auto& t = s.runs[i];
      csv << name << ',' << i << ',' << t.ann_search << ',' << t.fusion << ',' << t.aggregation << ',' << t.total
          << '\n';
    }
  };
  rows("base", base);

  std::ostringstream summary;
  auto stage_stats = [&](const char* name, const BenchSeries& s) {
    auto stats = [&](const char* stage, auto member) {
      std::vector<double> v;
      for (const auto& r : s.runs) v.push_back(r.*member);
      std::sort(v.begin(), v.end());
      const double med = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
      summary << name << '_' << stage << "_min=" << v.front() << '\n'
              << name << '_' << stage << "_median=" << med << '\n';
    };
    stats("ann_search", &opal::StageTimings::ann_search);
    stats("fusion", &opal::StageTimings::fusion);
    stats("aggregation", &opal::StageTimings::aggregation);
    stats("total", &opal::StageTimings::total);
  };
  stage_stats("base", base);

  if (!cfg.compare_library.empty()) {
    const auto other = bench_library(cfg, opal::read_library(cfg.compare_library));
    rows("compare", other);
    stage_stats("compare", other);
    summary << "time_ratio=" << other.median_total() / base.median_total() << '\n';
  }
  const fs::path out = cfg.out;
  opal::write_text(out / "bench.csv", csv.str());
  opal::write_text(out / "bench.meta", summary.str());
  opal::write_text(out / "run.meta", opal::format_run_meta(cfg));
  std::cout << summary.str();
  return 0;
}

struct PhantomArgs {
  std::string out;
  std::string dims = "48";
  std::string axes;
  opal::PhantomSpec spec;
};

std::vector<double> parse_triple(const std::string& text, const char* what) {
  std::vector<double> v;
  for (const auto& s : opal::detail::split_list(text)) v.push_back(opal::detail::parse_number<double>(what, s));
  if (v.size() == 1) v.assign(3, v[0]);
  if (v.size() != 3) throw opal::ConfigError(std::string(what) + " needs 1 or 3 comma-separated values");
  return v;
}

int cmd_phantom(PhantomArgs args) {
  require(args.out, "out");
  const auto d = parse_triple(args.dims, "dims");
  for (double x : d) {
    if (x != static_cast<int>(x)) throw opal::ConfigError("dims must be integers");
  }
  args.spec.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
  if (args.axes.empty()) {
    args.spec = opal::fit_semi_axes(args.spec);
  } else {
    const auto a = parse_triple(args.axes, "axes");
    args.spec.semi_axes = {a[0], a[1], a[2]};
  }
  try {
    args.spec.validate();
  } catch (const opal::ContractError& e) {
    throw opal::ConfigError(e.what());
  }
  const auto lib = opal::generate_library(args.spec);
  opal::write_cohort(args.out, lib, opal::describe(args.spec));
  std::cout << "phantom: " << lib.size() << " subjects written to " << args.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opal: patch-based multi-atlas segmentation"};
  app.require_subcommand(1);

  Overrides seg_o, loo_o, bench_o;
  auto* seg = app.add_subcommand("segment", "Segment one subject with a template library");
  add_run_options(seg, seg_o, true);
  auto* loo = app.add_subcommand("loo", "Leave-one-out evaluation over a labelled cohort");
  add_run_options(loo, loo_o, false);
  auto* bench = app.add_subcommand("bench", "Time repeated segmentations");
  add_run_options(bench, bench_o, true);
  bench_o.add(bench, "--repeats", "repeats", "Number of timed runs");
  bench_o.add(bench, "--compare-library", "compare_library", "Second library to time against the first");

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic labelled cohort");
  phantom->add_option("--out", ph.out, "Output directory");
  phantom->add_option("--n", ph.spec.n_subjects, "Number of subjects");
  phantom->add_option("--seed", ph.spec.seed, "RNG seed");
  phantom->add_option("--dims", ph.dims, "Volume size: N or NX,NY,NZ");
  phantom->add_option("--axes", ph.axes, "Ellipsoid semi-axes in voxels: A or A,B,C (default 16,13,11, shrunk to fit)");
  phantom->add_option("--amplitude", ph.spec.amplitude, "Deformation amplitude (voxels)");
  phantom->add_option("--noise", ph.spec.noise_std, "Noise standard deviation");
  phantom->add_option("--foreground", ph.spec.foreground, "Foreground intensity");
  phantom->add_option("--background", ph.spec.background, "Background intensity");
  phantom->add_option("--max-patch-radius", ph.spec.max_patch_radius, "Largest patch radius to accommodate");

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*version) {
      std::cout << "opal " << opal::kVersion << " (" << opal::kRngName << ")\n";
      return 0;
    }
    if (*phantom) return cmd_phantom(ph);
    if (*seg) return cmd_segment(build_config(seg, seg_o));
    if (*loo) return cmd_loo(build_config(loo, loo_o));
    if (*bench) return cmd_bench(build_config(bench, bench_o));
  } catch (const opal::ConfigError& e) {
    std::cerr << "opal: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const opal::IoError& e) {
    std::cerr << "opal: I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "opal: pipeline error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitConfig;
}
