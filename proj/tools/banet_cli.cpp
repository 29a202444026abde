// banet: dataset synthesis, training, inference, evaluation, attention-mask
// dumps, parameter/FLOP accounting, and benchmarking for the BANet deblurrer.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "banet/blocks.hpp"
#include "banet/image_io.hpp"
#include "banet/loss.hpp"
#include "banet/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace banet;

using Scalar = float;  // CLI precision; tests run the core at 64-bit

namespace {

// ---------------------------------------------------------------------------
// run configuration (JSON file, flags override)
// ---------------------------------------------------------------------------

struct RunConfig {
  NetworkConfig net;
  LossConfig loss;
  LrSchedule schedule;
  AugmentConfig augment;
  SynthConfig synth;
  index_t batch = 4;
  std::uint64_t steps = 1000;
  std::uint64_t checkpoint_every = 0;
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw CLI::ValidationError("config", "unknown key '" + scope + it.key() + "'");
}

RunConfig parse_config_file(const std::string& path) {
  RunConfig rc;
  std::ifstream f(path);
  if (!f) throw CLI::ValidationError("config", "cannot open config file '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw CLI::ValidationError("config", std::string("bad JSON: ") + e.what());
  }
  reject_unknown(j, {"network", "loss", "schedule", "augment", "synth", "train"}, "");
  if (j.contains("network")) {
    const json& n = j["network"];
    reject_unknown(n, {"base_channels", "num_bams", "kernel_set", "variant", "conv_block", "seed"},
                   "network.");
    rc.net.base_channels = n.value("base_channels", rc.net.base_channels);
    rc.net.num_bams = n.value("num_bams", rc.net.num_bams);
    if (n.contains("kernel_set")) rc.net.kernel_set.ns = n["kernel_set"].get<std::vector<index_t>>();
    if (n.contains("variant")) rc.net.variant = variant_from_string(n["variant"].get<std::string>());
    if (n.contains("conv_block"))
      rc.net.conv_block = conv_block_from_string(n["conv_block"].get<std::string>());
    rc.net.seed = n.value("seed", rc.net.seed);
  }
  if (j.contains("loss")) {
    const json& n = j["loss"];
    reject_unknown(n, {"epsilon", "lambda"}, "loss.");
    rc.loss.epsilon = n.value("epsilon", rc.loss.epsilon);
    rc.loss.lambda = n.value("lambda", rc.loss.lambda);
  }
  if (j.contains("schedule")) {
    const json& n = j["schedule"];
    reject_unknown(n, {"eta_max", "eta_min", "total_steps"}, "schedule.");
    rc.schedule.eta_max = n.value("eta_max", rc.schedule.eta_max);
    rc.schedule.eta_min = n.value("eta_min", rc.schedule.eta_min);
    rc.schedule.total_steps = n.value("total_steps", rc.schedule.total_steps);
  }
  if (j.contains("augment")) {
    const json& n = j["augment"];
    reject_unknown(n, {"crop", "hflip", "vflip", "rot90", "enabled"}, "augment.");
    rc.augment.crop = n.value("crop", rc.augment.crop);
    rc.augment.hflip = n.value("hflip", rc.augment.hflip);
    rc.augment.vflip = n.value("vflip", rc.augment.vflip);
    rc.augment.rot90 = n.value("rot90", rc.augment.rot90);
    rc.augment.enabled = n.value("enabled", rc.augment.enabled);
  }
  if (j.contains("synth")) {
    const json& n = j["synth"];
    reject_unknown(n, {"size", "seed", "kernel_min", "kernel_max", "count"}, "synth.");
    rc.synth.size = n.value("size", rc.synth.size);
    rc.synth.seed = n.value("seed", rc.synth.seed);
    rc.synth.kernel_min = n.value("kernel_min", rc.synth.kernel_min);
    rc.synth.kernel_max = n.value("kernel_max", rc.synth.kernel_max);
    rc.synth.count = n.value("count", rc.synth.count);
  }
  if (j.contains("train")) {
    const json& n = j["train"];
    reject_unknown(n, {"batch", "steps", "checkpoint_every"}, "train.");
    rc.batch = n.value("batch", rc.batch);
    rc.steps = n.value("steps", rc.steps);
    rc.checkpoint_every = n.value("checkpoint_every", rc.checkpoint_every);
  }
  return rc;
}

json resolved_config(const RunConfig& rc) {
  json j;
  j["network"] = {{"base_channels", rc.net.base_channels},
                  {"num_bams", rc.net.num_bams},
                  {"kernel_set", rc.net.kernel_set.ns},
                  {"variant", to_string(rc.net.variant)},
                  {"conv_block", to_string(rc.net.block_kind())},
                  {"seed", rc.net.seed}};
  j["loss"] = {{"epsilon", rc.loss.epsilon}, {"lambda", rc.loss.lambda}};
  j["schedule"] = {{"eta_max", rc.schedule.eta_max},
                   {"eta_min", rc.schedule.eta_min},
                   {"total_steps", rc.schedule.total_steps}};
  j["augment"] = {{"crop", rc.augment.crop},
                  {"hflip", rc.augment.hflip},
                  {"vflip", rc.augment.vflip},
                  {"rot90", rc.augment.rot90},
                  {"enabled", rc.augment.enabled}};
  j["synth"] = {{"size", rc.synth.size},
                {"seed", rc.synth.seed},
                {"kernel_min", rc.synth.kernel_min},
                {"kernel_max", rc.synth.kernel_max},
                {"count", rc.synth.count}};
  j["train"] = {{"batch", rc.batch},
                {"steps", rc.steps},
                {"checkpoint_every", rc.checkpoint_every}};
  return j;
}

void echo_config(const RunConfig& rc) {
  std::cout << "resolved config:\n" << resolved_config(rc).dump(2) << "\n";
}

std::vector<ImagePair<Scalar>> load_dataset(const std::string& root,
                                            std::vector<std::string>* names = nullptr) {
  DatasetSpec ds;
  ds.root = root;
  std::vector<ImagePair<Scalar>> pairs;
  for (const auto& [bp, sp] : list_pairs(ds)) {
    pairs.push_back({load_image<Scalar>(bp), load_image<Scalar>(sp)});
    if (names) names->push_back(fs::path(bp).filename().string());
  }
  return pairs;
}

// Write-then-rename so failures never leave partial output files behind.
void write_text_file(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    f << body;
    if (!f) throw std::runtime_error("write failure on '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// tiled inference with linear overlap blending
// ---------------------------------------------------------------------------

Tensor<Scalar> infer_tiled(const Tensor<Scalar>& img, const BanetParams<Scalar>& p, index_t tile,
                           index_t overlap) {
  const Shape4 s = img.shape();
  if (tile % 2 != 0) throw std::runtime_error("--tile must be even");
  if (overlap < 0 || overlap >= tile) throw std::runtime_error("--overlap must be in [0, tile)");
  if (tile >= s.h && tile >= s.w) return restore_image(img, p);
  const index_t step = tile - overlap;

  Tensor<Scalar> acc(s);
  Tensor<Scalar> wsum(Shape4{1, 1, s.h, s.w});
  auto ramp = [&](index_t local, index_t extent) -> Scalar {
    // linear ramp across the overlap band at both tile edges
    if (overlap == 0) return Scalar(1);
    const Scalar up = std::min<Scalar>(1, (Scalar(local) + 1) / Scalar(overlap + 1));
    const Scalar down = std::min<Scalar>(1, (Scalar(extent - local)) / Scalar(overlap + 1));
    return std::min(up, down);
  };

  for (index_t i0 = 0;; i0 += step) {
    i0 = std::min(i0, std::max<index_t>(0, s.h - tile));
    for (index_t j0 = 0;; j0 += step) {
      j0 = std::min(j0, std::max<index_t>(0, s.w - tile));
      const index_t th = std::min(tile, s.h - i0), tw = std::min(tile, s.w - j0);
      Tensor<Scalar> patch = crop_tensor(img, i0, j0, th, tw);
      Tensor<Scalar> out = restore_image(patch, p);
      for (index_t c = 0; c < s.c; ++c)
        for (index_t i = 0; i < th; ++i)
          for (index_t j = 0; j < tw; ++j) {
            const Scalar w = ramp(i, th) * ramp(j, tw);
            acc.at(0, c, i0 + i, j0 + j) += w * out.at(0, c, i, j);
            if (c == 0) wsum.at(0, 0, i0 + i, j0 + j) += w;
          }
      if (j0 + tile >= s.w) break;
    }
    if (i0 + tile >= s.h) break;
  }
  for (index_t c = 0; c < s.c; ++c)
    for (index_t i = 0; i < s.h; ++i)
      for (index_t j = 0; j < s.w; ++j) acc.at(0, c, i, j) /= wsum.at(0, 0, i, j);
  return acc;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out, index_t count, index_t size, std::uint64_t seed) {
  fs::create_directories(fs::path(out) / "blur");
  fs::create_directories(fs::path(out) / "sharp");
  SynthConfig sc;
  sc.size = size;
  sc.seed = seed;
  sc.count = count;
  Rng rng(seed);
  json manifest;
  manifest["count"] = count;
  manifest["size"] = size;
  manifest["seed"] = seed;
  manifest["images"] = json::array();
  for (index_t i = 0; i < count; ++i) {
    auto pair = synth_blur_pair<Scalar>(sc, rng);
    char name[32];
    std::snprintf(name, sizeof name, "%05lld.png", static_cast<long long>(i));
    save_image((fs::path(out) / "blur" / name).string(), pair.blur);
    save_image((fs::path(out) / "sharp" / name).string(), pair.sharp);
    double tap_sum = 0;
    for (double v : pair.kernel.taps) tap_sum += v;
    manifest["images"].push_back({{"name", name},
                                  {"kernel_size", pair.kernel.size},
                                  {"kernel_length", pair.kernel.length},
                                  {"kernel_angle", pair.kernel.angle},
                                  {"kernel_sum", tap_sum},
                                  {"kernel_taps", pair.kernel.taps}});
  }
  write_text_file((fs::path(out) / "manifest.json").string(), manifest.dump(2));
  std::cout << "wrote " << count << " pairs under " << out << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
  echo_config(rc);
  fs::create_directories(out_dir);

  std::vector<ImagePair<Scalar>> data;
  if (!data_dir.empty()) {
    data = load_dataset(data_dir);
  } else {
    Rng rng(rc.synth.seed);
    for (index_t i = 0; i < rc.synth.count; ++i) {
      auto pair = synth_blur_pair<Scalar>(rc.synth, rng);
      data.push_back({std::move(pair.blur), std::move(pair.sharp)});
    }
  }
  if (data.empty()) throw std::runtime_error("no training data (give --data or synth.count > 0)");

  TrainState<Scalar> st;
  if (!resume.empty()) {
    Checkpoint<Scalar> ck = load_checkpoint_expect<Scalar>(resume, rc.net);
    if (!ck.has_train_state)
      throw std::runtime_error("checkpoint '" + resume + "' has no optimizer state to resume");
    st.params = std::move(ck.params);
    st.adam = std::move(ck.adam);
    st.step = ck.step;
    st.data_rng = ck.data_rng;
    std::cout << "resumed from step " << st.step << "\n";
  } else {
    st.params = build_network<Scalar>(rc.net);
    st.data_rng = Rng(rc.net.seed ^ 0x5eedULL);
  }

  std::string log_csv = "step,lr,l_char,l_fft,l_total,wall_ms\n";
  TrainHyper<Scalar> h;
  h.batch = rc.batch;
  h.steps = rc.steps;
  h.augment = rc.augment;
  h.loss = rc.loss;
  h.schedule = rc.schedule;
  h.checkpoint_every = rc.checkpoint_every;
  h.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
  h.log = [&](const LogRow& r) {
    char line[256];
    // full precision: the loss log is the strict-mode reproducibility witness
    std::snprintf(line, sizeof line, "%llu,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                  static_cast<unsigned long long>(r.step), r.lr, r.l_char, r.l_fft, r.l_total,
                  r.wall_ms);
    log_csv += line;
    if (r.step % 50 == 0 || r.step == 1)
      std::printf("step %6llu  lr %.3e  loss %.6f\n", static_cast<unsigned long long>(r.step),
                  r.lr, r.l_total);
  };
  train_loop(st, data, h);
  write_text_file((fs::path(out_dir) / "train_log.csv").string(), log_csv);
  std::cout << "finished at step " << st.step << "; checkpoint + log in " << out_dir << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& out,
              index_t tile, index_t overlap) {
  Checkpoint<Scalar> ck = load_checkpoint<Scalar>(ckpt);
  fs::create_directories(out);
  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file()) inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.push_back(input);
  }
  if (inputs.empty()) throw std::runtime_error("no input images under '" + input + "'");
  for (const fs::path& in : inputs) {
    Tensor<Scalar> img = load_image<Scalar>(in.string());
    Tensor<Scalar> restored =
        (tile > 0) ? infer_tiled(img, ck.params, tile, overlap) : restore_image(img, ck.params);
    save_image((fs::path(out) / in.filename()).string(), restored);
  }
  std::cout << "restored " << inputs.size() << " image(s) into " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_csv) {
  Checkpoint<Scalar> ck = load_checkpoint<Scalar>(ckpt);
  std::vector<std::string> names;
  auto pairs = load_dataset(data_dir, &names);
  EvalResult res = evaluate(ck.params, pairs, &names);
  std::string csv = "filename,psnr_db,ssim\n";
  for (const auto& row : res.rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", row.name.c_str(), row.psnr_db, row.ssim);
    csv += line;
  }
  char mean[128];
  std::snprintf(mean, sizeof mean, "mean,%.6f,%.6f\n", res.mean_psnr, res.mean_ssim);
  csv += mean;
  if (!out_csv.empty())
    write_text_file(out_csv, csv);
  else
    std::cout << csv;
  std::printf("mean PSNR %.3f dB, mean SSIM %.4f over %zu pairs\n", res.mean_psnr, res.mean_ssim,
              res.rows.size());
  return 0;
}

int cmd_attn(const std::string& ckpt, const std::string& input, const std::string& out) {
  Checkpoint<Scalar> ck = load_checkpoint<Scalar>(ckpt);
  fs::create_directories(out);
  Tensor<Scalar> img = load_image<Scalar>(input);
  const Shape4 s = img.shape();
  if (s.h % 2 || s.w % 2) throw std::runtime_error("attn input dims must be even");
  std::vector<BamMasks<Scalar>> masks;
  banet_forward(img, ck.params, static_cast<BanetCtx<Scalar>*>(nullptr), &masks);
  index_t written = 0;
  for (size_t i = 0; i < masks.size(); ++i) {
    char name[64];
    if (masks[i].m_mksp) {
      // channel-mean then min-max normalization
      const Tensor<Scalar>& m = *masks[i].m_mksp;
      Tensor<Scalar> mean(Shape4{1, 1, m.shape().h, m.shape().w});
      for (index_t c = 0; c < m.shape().c; ++c)
        for (index_t y = 0; y < m.shape().h; ++y)
          for (index_t x = 0; x < m.shape().w; ++x)
            mean.at(0, 0, y, x) += m.at(0, c, y, x) / static_cast<Scalar>(m.shape().c);
      std::snprintf(name, sizeof name, "bam%02zu_mksp.png", i);
      save_gray_image((fs::path(out) / name).string(), mean, 0, 0);
      ++written;
    }
    if (masks[i].m_ar) {
      std::snprintf(name, sizeof name, "bam%02zu_ar.png", i);
      save_gray_image((fs::path(out) / name).string(), *masks[i].m_ar, 0, 0);
      ++written;
    }
  }
  std::cout << "wrote " << written << " mask images into " << out << "\n";
  return 0;
}

int cmd_params(const RunConfig& rc, index_t res_h, index_t res_w) {
  echo_config(rc);
  const index_t params = count_params(rc.net);
  const index_t flops = count_flops(rc.net, res_h, res_w);
  std::printf("parameters: %lld (%.2f M)\n", static_cast<long long>(params),
              static_cast<double>(params) / 1e6);
  std::printf("flops @ %lldx%lld: %lld (%.1f GFLOPs)\n", static_cast<long long>(res_w),
              static_cast<long long>(res_h), static_cast<long long>(flops),
              static_cast<double>(flops) / 1e9);
  return 0;
}

int cmd_bench(const RunConfig& rc, index_t res_h, index_t res_w, int iters) {
  if (res_h % 2 || res_w % 2) throw CLI::ValidationError("bench", "--res dims must be even");
  BanetParams<Scalar> p = build_network<Scalar>(rc.net);
  Rng rng(1);
  Tensor<Scalar> img(Shape4{1, 3, res_h, res_w});
  for (index_t i = 0; i < img.size(); ++i) img[i] = static_cast<Scalar>(rng.uniform());
  banet_forward(img, p);  // warm-up
  std::vector<double> ms;
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    banet_forward(img, p);
    ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  double mean = 0;
  for (double v : ms) mean += v;
  mean /= ms.size();
  const double p50 = ms[ms.size() / 2];
  const double p95 = ms[std::min(ms.size() - 1, static_cast<size_t>(ms.size() * 95 / 100))];
  std::printf("forward @ %lldx%lld over %d iters: mean %.1f ms, p50 %.1f ms, p95 %.1f ms\n",
              static_cast<long long>(res_w), static_cast<long long>(res_h), iters, mean, p50, p95);
  return 0;
}

bool parse_res(const std::string& s, index_t& h, index_t& w) {
  const size_t x = s.find('x');
  if (x == std::string::npos) return false;
  try {
    h = std::stoll(s.substr(0, x));
    w = std::stoll(s.substr(x + 1));
  } catch (...) {
    return false;
  }
  return h > 0 && w > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BANet motion deblurring toolkit"};
  app.require_subcommand(1);

  std::string config_file, data_dir, out_dir = "runs/default", ckpt, input, out_csv, res = "720x1280",
                                     resume;
  index_t count = 16, size = 96, tile = 0, overlap = 16;
  std::uint64_t seed = 0;
  int iters = 10;
  // flag overrides applied on top of the config file
  std::optional<index_t> o_channels, o_bams, o_batch, o_crop;
  std::optional<std::uint64_t> o_steps, o_seed;
  std::optional<std::string> o_variant, o_block;

  auto add_config_flags = [&](CLI::App* c) {
    c->add_option("--config", config_file, "JSON config file");
    c->add_option("--channels", o_channels, "override network.base_channels");
    c->add_option("--bams", o_bams, "override network.num_bams");
    c->add_option("--variant", o_variant, "override network.variant (net1..net6, full)");
    c->add_option("--block", o_block, "override network.conv_block (pdc, pdc2, cpdc)");
    c->add_option("--seed", o_seed, "override network.seed");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate paired synthetic blur data");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--count", count, "number of pairs");
  synth->add_option("--size", size, "square image size");
  synth->add_option("--seed", seed, "generator seed");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_config_flags(train);
  train->add_option("--data", data_dir, "dataset root with blur/ and sharp/");
  train->add_option("--out", out_dir, "output directory for log + checkpoint");
  train->add_option("--steps", o_steps, "override train.steps");
  train->add_option("--batch", o_batch, "override train.batch");
  train->add_option("--crop", o_crop, "override augment.crop");
  train->add_option("--resume", resume, "checkpoint to resume from");

  CLI::App* infer = app.add_subcommand("infer", "restore images");
  infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
  infer->add_option("--in", input, "input image or directory")->required();
  infer->add_option("--out", out_dir, "output directory")->required();
  infer->add_option("--tile", tile, "tile size for tiled inference (0 = whole image)");
  infer->add_option("--overlap", overlap, "tile overlap in pixels");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a paired dataset");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset root with blur/ and sharp/")->required();
  eval->add_option("--csv", out_csv, "write the metric CSV here instead of stdout");

  CLI::App* attn = app.add_subcommand("attn", "dump per-BAM attention masks");
  attn->add_option("--ckpt", ckpt, "checkpoint file")->required();
  attn->add_option("--in", input, "input image")->required();
  attn->add_option("--out", out_dir, "output directory")->required();

  CLI::App* params = app.add_subcommand("params", "print parameter and FLOP counts");
  add_config_flags(params);
  params->add_option("--res", res, "resolution HxW for the FLOP count");

  CLI::App* bench = app.add_subcommand("bench", "benchmark forward-pass wall time");
  add_config_flags(bench);
  bench->add_option("--res", res, "resolution HxW");
  bench->add_option("--iters", iters, "warm iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig rc = config_file.empty() ? RunConfig{} : parse_config_file(config_file);
    if (o_channels) rc.net.base_channels = *o_channels;
    if (o_bams) rc.net.num_bams = *o_bams;
    if (o_variant) rc.net.variant = variant_from_string(*o_variant);
    if (o_block) rc.net.conv_block = conv_block_from_string(*o_block);
    if (o_seed) rc.net.seed = *o_seed;
    if (o_steps) rc.steps = *o_steps;
    if (o_batch) rc.batch = *o_batch;
    if (o_crop) rc.augment.crop = *o_crop;

    index_t res_h = 720, res_w = 1280;
    if ((params->parsed() || bench->parsed()) && !parse_res(res, res_h, res_w))
      throw CLI::ValidationError("--res", "expected HxW, got '" + res + "'");

    if (synth->parsed()) return cmd_synth(out_dir, count, size, seed);
    if (train->parsed()) return cmd_train(rc, data_dir, out_dir, resume);
    if (infer->parsed()) return cmd_infer(ckpt, input, out_dir, tile, overlap);
    if (eval->parsed()) return cmd_eval(ckpt, data_dir, out_csv);
    if (attn->parsed()) return cmd_attn(ckpt, input, out_dir);
    if (params->parsed()) return cmd_params(rc, res_h, res_w);
    if (bench->parsed()) return cmd_bench(rc, res_h, res_w, iters);
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
}
