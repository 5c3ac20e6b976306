#include "him/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "him/matcher.hpp"

namespace him {

double alpha_iou(const Tensor& pred, const Tensor& gt, double bin) {
  if (!(bin > 0.0 && bin < 1.0))
    throw ConfigError("iou binarization level must lie inside (0,1)");
  if (pred.shape() != gt.shape())
    throw ShapeError("alpha_iou: shape mismatch");
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] > bin, g = gt[i] > bin;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchedPairSet match_for_eval(const std::vector<Tensor>& preds,
                              const std::vector<Tensor>& gts, double bin) {
  MatchedPairSet out;
  out.n_pred = static_cast<int>(preds.size());
  out.n_gt = static_cast<int>(gts.size());
  if (preds.empty() || gts.empty()) {
    for (int i = 0; i < out.n_pred; ++i) out.unmatched_preds.push_back(i);
    for (int j = 0; j < out.n_gt; ++j) out.unmatched_gts.push_back(j);
    return out;
  }

  // solve_assignment wants at least as many queries as targets; orient the
  // larger side as queries and negate to maximize
  const bool preds_as_queries = out.n_pred >= out.n_gt;
  const int nq = preds_as_queries ? out.n_pred : out.n_gt;
  const int nt = preds_as_queries ? out.n_gt : out.n_pred;
  Tensor cost = Tensor::zeros({nq, nt});
  for (int q = 0; q < nq; ++q)
    for (int t = 0; t < nt; ++t) {
      const int p = preds_as_queries ? q : t;
      const int g = preds_as_queries ? t : q;
      cost.at(q, t) = -alpha_iou(preds[static_cast<size_t>(p)],
                                 gts[static_cast<size_t>(g)], bin);
    }
  Assignment a = solve_assignment(cost);

  std::vector<bool> pred_used(static_cast<size_t>(out.n_pred), false);
  std::vector<bool> gt_used(static_cast<size_t>(out.n_gt), false);
  for (const auto& [q, t] : a.pairs) {
    MatchedPair mp;
    mp.pred = preds_as_queries ? q : t;
    mp.gt = preds_as_queries ? t : q;
    mp.iou = -cost.at(q, t);
    pred_used[static_cast<size_t>(mp.pred)] = true;
    gt_used[static_cast<size_t>(mp.gt)] = true;
    out.pairs.push_back(mp);
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const MatchedPair& x, const MatchedPair& y) {
              return x.gt < y.gt;
            });
  for (int i = 0; i < out.n_pred; ++i)
    if (!pred_used[static_cast<size_t>(i)]) out.unmatched_preds.push_back(i);
  for (int j = 0; j < out.n_gt; ++j)
    if (!gt_used[static_cast<size_t>(j)]) out.unmatched_gts.push_back(j);
  return out;
}

InstanceMetrics instance_metrics(const MatchedPairSet& matches,
                                 const std::vector<Tensor>& preds,
                                 const std::vector<Tensor>& gts, double th) {
  InstanceMetrics m;
  double emse_sum = 0.0, emad_sum = 0.0;
  for (const MatchedPair& pair : matches.pairs) {
    if (!(pair.iou > th)) continue;  // strict threshold
    ++m.n_th;
    const Tensor& p = preds.at(static_cast<size_t>(pair.pred));
    const Tensor& g = gts.at(static_cast<size_t>(pair.gt));
    if (p.shape() != g.shape())
      throw ShapeError("instance_metrics: matched mattes differ in shape");
    double se = 0.0, ae = 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double d = p[i] - g[i];
      se += d * d;
      ae += std::abs(d);
    }
    emse_sum += se / static_cast<double>(p.numel());
    emad_sum += ae / static_cast<double>(p.numel());
  }
  if (matches.n_pred > 0)
    m.acc = static_cast<double>(m.n_th) / matches.n_pred;
  if (matches.n_gt > 0) m.rec = static_cast<double>(m.n_th) / matches.n_gt;
  if (m.n_th > 0) {
    m.emse = emse_sum / m.n_th;
    m.emad = emad_sum / m.n_th;
  }
  return m;
}

ScalarMetrics matting_metrics(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape())
    throw ShapeError("matting_metrics: shape mismatch");
  ScalarMetrics s;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - gt[i];
    s.sad += std::abs(d);
    s.mse += d * d;
  }
  s.mad = s.sad / static_cast<double>(pred.numel());
  s.mse /= static_cast<double>(pred.numel());
  return s;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::string threshold_key(double th) {
  std::ostringstream os;
  os << th;
  return os.str();
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["thresholds"] = nlohmann::ordered_json::object();
  for (const auto& [key, m] : thresholds) {
    nlohmann::ordered_json t;
    t["acc"] = opt_json(m.acc);
    t["rec"] = opt_json(m.rec);
    t["emse"] = opt_json(m.emse);
    t["emad"] = opt_json(m.emad);
    t["n_th"] = m.n_th;
    j["thresholds"][key] = t;
  }
  j["sad"] = opt_json(sad);
  j["mse"] = opt_json(mse);
  j["mad"] = opt_json(mad);
  j["per_image"] = nlohmann::ordered_json::array();
  for (const ImageRecord& r : per_image) {
    nlohmann::ordered_json e;
    e["id"] = r.id;
    e["n_pred"] = r.n_pred;
    e["n_gt"] = r.n_gt;
    e["mean_iou"] = r.mean_iou;
    j["per_image"].push_back(e);
  }
  return j;
}

void EvalAccumulator::add_image(const std::string& id,
                                const std::vector<Tensor>& preds,
                                const std::vector<Tensor>& gts, double bin) {
  MatchedPairSet local = match_for_eval(preds, gts, bin);
  const int pred_base = static_cast<int>(all_preds_.size());
  const int gt_base = static_cast<int>(all_gts_.size());
  for (const Tensor& p : preds) all_preds_.push_back(p);
  for (const Tensor& g : gts) all_gts_.push_back(g);

  pooled_.n_pred += local.n_pred;
  pooled_.n_gt += local.n_gt;
  double iou_sum = 0.0;
  for (const MatchedPair& pair : local.pairs) {
    MatchedPair shifted = pair;
    shifted.pred += pred_base;
    shifted.gt += gt_base;
    pooled_.pairs.push_back(shifted);
    iou_sum += pair.iou;
  }
  for (int i : local.unmatched_preds)
    pooled_.unmatched_preds.push_back(i + pred_base);
  for (int j : local.unmatched_gts)
    pooled_.unmatched_gts.push_back(j + gt_base);

  MetricsReport::ImageRecord rec;
  rec.id = id;
  rec.n_pred = local.n_pred;
  rec.n_gt = local.n_gt;
  rec.mean_iou =
      local.pairs.empty() ? 0.0 : iou_sum / static_cast<double>(local.pairs.size());
  images_.push_back(rec);
}

MetricsReport EvalAccumulator::report(const std::vector<double>& ths) const {
  MetricsReport r;
  for (double th : ths)
    r.thresholds.emplace_back(
        threshold_key(th), instance_metrics(pooled_, all_preds_, all_gts_, th));
  if (!pooled_.pairs.empty()) {
    double sad = 0.0, mse = 0.0, mad = 0.0;
    for (const MatchedPair& pair : pooled_.pairs) {
      ScalarMetrics s =
          matting_metrics(all_preds_.at(static_cast<size_t>(pair.pred)),
                          all_gts_.at(static_cast<size_t>(pair.gt)));
      sad += s.sad;
      mse += s.mse;
      mad += s.mad;
    }
    const double n = static_cast<double>(pooled_.pairs.size());
    r.sad = sad / n;
    r.mse = mse / n;
    r.mad = mad / n;
  }
  r.per_image = images_;
  return r;
}

}  // namespace him
