#include "dpdl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dpdl/error.hpp"
#include "dpdl/key_value.hpp"
#include "dpdl/losses.hpp"

namespace dpdl {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (iters_per_epoch == 0) fail("iters_per_epoch must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (!(lambda >= 0)) fail("lambda must be >= 0");
  if (!(kappa >= 0)) fail("kappa must be >= 0");
  if (!(epsilon > 0)) fail("epsilon must be > 0");
  if (C == 0) fail("C must be >= 1");
  if (!(topk_fraction > 0 && topk_fraction <= 1)) fail("topk_fraction must be in (0, 1]");
  if (!(pseudo_anomaly_rate >= 0 && pseudo_anomaly_rate <= 1))
    fail("pseudo_anomaly_rate must be in [0, 1]");
  if (vq_iters == 0) fail("vq_iters must be >= 1");
  if (!(grad_clip > 0)) fail("grad_clip must be > 0");
  if (!(log_variance_min < log_variance_max)) fail("log_variance_min must be < log_variance_max");
  if (!(log_variance_min <= 0 && log_variance_max >= 0))
    fail("the log-variance box must contain 0 (the initial value)");
}

TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv, TrainConfig c) {
  auto size = [](const std::string& k, const std::string& v) {
    const long long x = parse_int(k, v);
    if (x < 0) throw FormatError("`" + k + "` must be non-negative");
    return static_cast<std::size_t>(x);
  };
  for (const auto& [k, v] : kv) {
    if (k == "epochs") c.epochs = size(k, v);
    else if (k == "iters_per_epoch") c.iters_per_epoch = size(k, v);
    else if (k == "batch_size") c.batch_size = size(k, v);
    else if (k == "learning_rate") c.learning_rate = parse_double(k, v);
    else if (k == "weight_decay") c.weight_decay = parse_double(k, v);
    else if (k == "lambda") c.lambda = parse_double(k, v);
    else if (k == "kappa") c.kappa = parse_double(k, v);
    else if (k == "epsilon") c.epsilon = parse_double(k, v);
    else if (k == "C") c.C = size(k, v);
    else if (k == "topk_fraction") c.topk_fraction = parse_double(k, v);
    else if (k == "M") c.M = size(k, v);
    else if (k == "protocol") c.protocol = parse_protocol(v);
    else if (k == "seed") c.seed = parse_u64(k, v);
    else if (k == "residual_scale") c.residual_scale = parse_residual_scale(v);
    else if (k == "pseudo_anomaly_rate") c.pseudo_anomaly_rate = parse_double(k, v);
    else if (k == "vq_iters") c.vq_iters = size(k, v);
    else if (k == "grad_clip") c.grad_clip = parse_double(k, v);
    else if (k == "log_variance_min") c.log_variance_min = parse_double(k, v);
    else if (k == "log_variance_max") c.log_variance_max = parse_double(k, v);
    else if (k == "freeze_heads") c.freeze_heads = parse_bool(k, v);
    else if (k == "stochastic_endpoint") c.stochastic_endpoint = parse_bool(k, v);
    else throw FormatError("train config: unknown key `" + k + "`");
  }
  c.validate();
  return c;
}

TrainConfig train_config_from_file(const std::string& path) {
  return train_config_from_map(read_key_value_file(path));
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string train_config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "epochs = " << c.epochs << "\n"
     << "iters_per_epoch = " << c.iters_per_epoch << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "learning_rate = " << fmt_double(c.learning_rate) << "\n"
     << "weight_decay = " << fmt_double(c.weight_decay) << "\n"
     << "lambda = " << fmt_double(c.lambda) << "\n"
     << "kappa = " << fmt_double(c.kappa) << "\n"
     << "epsilon = " << fmt_double(c.epsilon) << "\n"
     << "C = " << c.C << "\n"
     << "topk_fraction = " << fmt_double(c.topk_fraction) << "\n"
     << "M = " << c.M << "\n"
     << "protocol = " << to_string(c.protocol) << "\n"
     << "seed = " << c.seed << "\n"
     << "residual_scale = " << to_string(c.residual_scale) << "\n"
     << "pseudo_anomaly_rate = " << fmt_double(c.pseudo_anomaly_rate) << "\n"
     << "vq_iters = " << c.vq_iters << "\n"
     << "grad_clip = " << fmt_double(c.grad_clip) << "\n"
     << "log_variance_min = " << fmt_double(c.log_variance_min) << "\n"
     << "log_variance_max = " << fmt_double(c.log_variance_max) << "\n"
     << "freeze_heads = " << (c.freeze_heads ? "true" : "false") << "\n"
     << "stochastic_endpoint = " << (c.stochastic_endpoint ? "true" : "false") << "\n";
  return os.str();
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,L_Ma,L_Mn,L_Mr,L_DPLn,L_DPLa,L_DFL,total\n";
  for (const auto& e : log)
    os << e.epoch << ',' << fmt_double(e.l_ma) << ',' << fmt_double(e.l_mn) << ','
       << fmt_double(e.l_mr) << ',' << fmt_double(e.l_dpl_n) << ',' << fmt_double(e.l_dpl_a) << ','
       << fmt_double(e.l_dfl) << ',' << fmt_double(e.total) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> sample_without_replacement(std::span<const std::size_t> pool,
                                                    std::size_t k, Rng& rng) {
  std::vector<std::size_t> v(pool.begin(), pool.end());
  k = std::min(k, v.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + rng.index(v.size() - i)]);
  v.resize(k);
  return v;
}

void add_head(HeadGrad& acc, const HeadGrad& g, double scale) {
  if (acc.weights.size() != g.weights.size()) acc.weights.assign(g.weights.size(), 0.0);
  for (std::size_t i = 0; i < g.weights.size(); ++i) acc.weights[i] += scale * g.weights[i];
  acc.bias += scale * g.bias;
}

std::vector<std::vector<double>> flats(const std::vector<FeatureMap>& items) {
  std::vector<std::vector<double>> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.values);
  return out;
}

}  // namespace

Batch draw_batch(const Dataset& dataset, const SplitPlan& split, const TrainConfig& config,
                 Rng& rng) {
  if (split.train_normal_ids.empty()) throw ValidationError("draw_batch: no training normals");
  Batch b;
  for (auto i : sample_without_replacement(split.train_normal_ids, config.batch_size, rng))
    b.normals.push_back(dataset.items[i]);
  const std::size_t n_anom = std::min<std::size_t>(split.train_anomaly_ids.size(), 10);
  const auto anomalies = split.train_anomaly_ids.size() <= 10
                             ? split.train_anomaly_ids
                             : sample_without_replacement(split.train_anomaly_ids, n_anom, rng);
  for (auto i : anomalies) b.anomalies.push_back(dataset.items[i]);

  const auto n_pseudo =
      static_cast<std::size_t>(std::lround(config.pseudo_anomaly_rate * static_cast<double>(config.batch_size)));
  const std::size_t pool = split.train_normal_ids.size() + split.train_anomaly_ids.size();
  for (std::size_t p = 0; p < n_pseudo; ++p) {
    const auto& base = dataset.items[split.train_normal_ids[rng.index(split.train_normal_ids.size())]];
    const std::size_t d = rng.index(pool);
    const std::size_t donor_id = d < split.train_normal_ids.size()
                                     ? split.train_normal_ids[d]
                                     : split.train_anomaly_ids[d - split.train_normal_ids.size()];
    b.pseudo.push_back(cutmix_pseudo_anomaly(base, dataset.items[donor_id], rng));
  }
  return b;
}

BatchLoss batch_objective(const MgpParams& mgp, const ScoringHeads& heads, const Batch& batch,
                          const TrainConfig& config, ModelGradient* grad, Rng* rng) {
  BatchLoss loss;
  if (batch.normals.empty()) throw ValidationError("batch_objective: batch has no normals");
  if (grad) {
    grad->mgp = MgpGradient::zeros_like(mgp);
    grad->anomaly = grad->normal = grad->residual = HeadGrad{};
    const std::size_t ch = heads.anomaly.weights.size();
    grad->anomaly.weights.assign(ch, 0.0);
    grad->normal.weights.assign(ch, 0.0);
    grad->residual.weights.assign(ch, 0.0);
  }

  struct Labelled {
    const FeatureMap* fm;
    double y;
  };
  std::vector<Labelled> items;
  for (const auto& f : batch.normals) items.push_back({&f, 0.0});
  for (const auto& f : batch.anomalies) items.push_back({&f, 1.0});
  for (const auto& f : batch.pseudo) items.push_back({&f, 1.0});
  loss.has_anomalies = !batch.anomalies.empty();

  const double inv_n = 1.0 / static_cast<double>(items.size());
  const EndpointMode endpoint =
      config.stochastic_endpoint ? EndpointMode::stochastic : EndpointMode::deterministic;
  if (endpoint == EndpointMode::stochastic && !rng)
    throw ValidationError("batch_objective: stochastic endpoint needs an Rng");
  for (const auto& it : items) {
    const auto la = head_loss_anomaly(heads, *it.fm, it.y);
    const auto ln = head_loss_normal(heads, *it.fm, it.y);
    const auto lr = head_loss_residual(heads, mgp, *it.fm, it.y, endpoint, rng);
    loss.l_ma += inv_n * la.value;
    loss.l_mn += inv_n * ln.value;
    loss.l_mr += inv_n * lr.value;
    if (grad) {
      add_head(grad->anomaly, la.head, inv_n);
      add_head(grad->normal, ln.head, inv_n);
      add_head(grad->residual, lr.head, inv_n);
      grad->mgp.add(lr.mgp, inv_n);
    }
  }

  const auto normals = flats(batch.normals);
  const auto dpl_n = loss_dpl_normal(mgp, normals);
  loss.l_dpl_n = dpl_n.value;
  if (grad) grad->mgp.add(dpl_n.mgp);
  if (loss.has_anomalies) {
    const auto dpl_a = loss_dpl_anomaly(mgp, flats(batch.anomalies));
    loss.l_dpl_a = dpl_a.value;
    if (grad) grad->mgp.add(dpl_a.mgp);
  }

  if (items.size() >= 2) {
    std::vector<std::vector<double>> unit;
    unit.reserve(items.size());
    for (const auto& it : items) unit.push_back(unitize(it.fm->values));
    loss.l_dfl = loss_dfl(unit, config.kappa).value;
  }

  loss.total = loss.l_ma + loss.l_mn + loss.l_mr + loss.l_dpl_n + loss.l_dpl_a + config.lambda * loss.l_dfl;
  return loss;
}

namespace {

struct ParamViews {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
};

ParamViews views(MgpParams& mgp, ScoringHeads& heads, ModelGradient& g, bool include_heads) {
  ParamViews v;
  v.params = {mgp.logits, mgp.means.data, mgp.log_variances.data};
  v.grads = {g.mgp.logits, g.mgp.means.data, g.mgp.log_variances.data};
  if (include_heads) {
    for (auto [h, hg] : {std::pair{&heads.anomaly, &g.anomaly}, std::pair{&heads.normal, &g.normal},
                         std::pair{&heads.residual, &g.residual}}) {
      v.params.emplace_back(h->weights);
      v.params.emplace_back(&h->bias, 1);
      v.grads.emplace_back(hg->weights);
      v.grads.emplace_back(&hg->bias, 1);
    }
  }
  return v;
}

void check_term(double v, const char* name, std::size_t epoch, std::size_t iter) {
  if (!std::isfinite(v))
    throw NumericError(std::string("training diverged: ") + name + " is non-finite at epoch " +
                       std::to_string(epoch) + ", iteration " + std::to_string(iter));
}

}  // namespace

TrainResult train(const Dataset& dataset, const SplitPlan& split, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  dataset.validate();
  if (split.train_normal_ids.empty()) throw ValidationError("train: split has no training normals");
  for (auto i : split.train_normal_ids)
    if (i >= dataset.size() || dataset.items[i].is_anomaly())
      throw ValidationError("train: split normal ids do not match the dataset");
  for (auto i : split.train_anomaly_ids)
    if (i >= dataset.size() || !dataset.items[i].is_anomaly())
      throw ValidationError("train: split anomaly ids do not match the dataset");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  Rng rng(config.seed);
  if (options.resume) {
    ck = *options.resume;
    if (ck.dims != dataset.dims) throw ValidationError("train: checkpoint dims differ from dataset");
    ck.config = config;
    rng.set_state(ck.rng_state);
  } else {
    std::vector<std::vector<double>> normals;
    for (auto i : split.train_normal_ids) normals.push_back(dataset.items[i].values);
    const auto init = vq_init(normals, config.C, config.vq_iters, derive_seed(config.seed, 1));
    ck.config = config;
    ck.dims = dataset.dims;
    ck.mgp = mgp_new(init, config.epsilon);
    ck.heads = ScoringHeads(dataset.dims.channels);
    ck.heads.topk_fraction = config.topk_fraction;
    ck.heads.residual_scale = config.residual_scale;
    ck.epoch = 0;
  }

  const AdamWHyper hyper{config.learning_rate, config.weight_decay};
  ModelGradient grad;
  for (std::size_t epoch = ck.epoch; epoch < config.epochs; ++epoch) {
    if (options.stop_after && epoch >= *options.stop_after) break;
    EpochLog log;
    log.epoch = epoch + 1;
    for (std::size_t it = 0; it < config.iters_per_epoch; ++it) {
      const Batch batch = draw_batch(dataset, split, config, rng);
      const BatchLoss l = batch_objective(ck.mgp, ck.heads, batch, config, &grad, &rng);
      check_term(l.l_ma, "L_Ma", epoch + 1, it);
      check_term(l.l_mn, "L_Mn", epoch + 1, it);
      check_term(l.l_mr, "L_Mr", epoch + 1, it);
      check_term(l.l_dpl_n, "L_DPLn", epoch + 1, it);
      check_term(l.l_dpl_a, "L_DPLa", epoch + 1, it);
      check_term(l.l_dfl, "L_DFL", epoch + 1, it);
      if (!grad.mgp.all_finite()) check_term(NAN, "prototype gradient", epoch + 1, it);

      auto v = views(ck.mgp, ck.heads, grad, !config.freeze_heads);
      std::vector<std::span<double>> mutable_grads;
      for (auto& g : v.grads) mutable_grads.emplace_back(const_cast<double*>(g.data()), g.size());
      clip_global_norm(mutable_grads, config.grad_clip);
      optimizer_step(v.params, v.grads, ck.optimizer, hyper);
      for (double& s : ck.mgp.log_variances.data)
        s = std::clamp(s, config.log_variance_min, config.log_variance_max);

      // alpha stays on the simplex and sigma positive by construction; a
      // non-finite raw parameter would break both.
      if (!all_finite(ck.mgp.logits) || !all_finite(ck.mgp.log_variances.data) ||
          !all_finite(ck.mgp.means.data))
        check_term(NAN, "prototype parameters", epoch + 1, it);

      log.l_ma += l.l_ma;
      log.l_mn += l.l_mn;
      log.l_mr += l.l_mr;
      log.l_dpl_n += l.l_dpl_n;
      log.l_dpl_a += l.l_dpl_a;
      log.l_dfl += l.l_dfl;
      log.total += l.total;
    }
    const double k = static_cast<double>(config.iters_per_epoch);
    for (double* f : {&log.l_ma, &log.l_mn, &log.l_mr, &log.l_dpl_n, &log.l_dpl_a, &log.l_dfl, &log.total})
      *f /= k;
    result.log.push_back(log);
    ck.epoch = static_cast<std::uint32_t>(epoch + 1);
  }
  ck.rng_state = rng.state();
  return result;
}

}  // namespace dpdl
