// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "escm/error.hpp"
#include "escm/rng.hpp"

namespace escm::synth {

namespace {

// Substream keys for Stream::fork.
constexpr std::uint64_t kUserFeatures = 1;
constexpr std::uint64_t kItemFeatures = 2;
constexpr std::uint64_t kCategoryWeights = 3;
constexpr std::uint64_t kPairNoise = 4;
constexpr std::uint64_t kPairSelection = 5;
constexpr std::uint64_t kConversionDraw = 6;
constexpr std::uint64_t kClickDraw = 7;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Finds b such that mean(sigmoid(b + raw[i])) == target.
double calibrate_intercept(const std::vector<double>& raw_logits, double target) {
  double lo = -30.0, hi = 30.0;
  auto mean_at = [&](double b) {
    double acc = 0.0;
    for (double r : raw_logits) acc += sigmoid(b + r);
    return acc / static_cast<double>(raw_logits.size());
  };
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mean_at(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<std::vector<std::uint32_t>> draw_entity_features(
    rng::Stream stream, std::size_t count, std::size_t vocab,
    std::size_t per_entity, std::uint32_t vocab_offset) {
  std::vector<std::vector<std::uint32_t>> out(count);
  for (std::size_t e = 0; e < count; ++e) {
    rng::Stream row = stream.fork(e);
    std::vector<std::uint32_t> ids;
    ids.reserve(per_entity);
    while (ids.size() < per_entity) {
      const auto candidate =
          static_cast<std::uint32_t>(row.next_below(vocab)) + vocab_offset;
      if (std::find(ids.begin(), ids.end(), candidate) == ids.end()) {
        ids.push_back(candidate);
      }
    }
    std::sort(ids.begin(), ids.end());
    out[e] = std::move(ids);
  }
  return out;
}

}  // namespace

void WorldConfig::validate() const {
  if (num_users == 0 || num_items == 0) {
    throw ConfigError("world: num_users and num_items must be >= 1");
  }
  if (target_ctr <= 0.0 || target_ctr >= 1.0) {
    throw ConfigError("world: target_ctr must lie in (0,1)");
  }
  if (target_cvr <= 0.0 || target_cvr >= 1.0) {
    throw ConfigError("world: target_cvr must lie in (0,1)");
  }
  if (confound_strength < 0.0) {
    throw ConfigError("world: confound_strength must be >= 0");
  }
  if (user_feature_vocab == 0 || item_feature_vocab == 0) {
    throw ConfigError("world: feature vocabs must be >= 1");
  }
  if (features_per_user == 0 || features_per_user > user_feature_vocab ||
      features_per_item == 0 || features_per_item > item_feature_vocab) {
    throw ConfigError("world: features per entity must be in [1, vocab]");
  }
  if (ctr_noise < 0.0 || cvr_noise < 0.0 || feature_logit_scale < 0.0) {
    throw ConfigError("world: noise and scale parameters must be >= 0");
  }
}

std::vector<std::uint32_t> SyntheticWorld::pair_features(
    std::uint64_t pair_id) const {
  const auto& uf = user_feature_ids[user_of(pair_id)];
  const auto& itf = item_feature_ids[item_of(pair_id)];
  std::vector<std::uint32_t> ids;
  ids.reserve(uf.size() + itf.size());
  ids.insert(ids.end(), uf.begin(), uf.end());
  ids.insert(ids.end(), itf.begin(), itf.end());
  return ids;
}

SyntheticWorld generate_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticWorld world;
  world.config = config;
  world.seed = seed;
  world.num_feature_categories =
      config.user_feature_vocab + config.item_feature_vocab;

  rng::Stream root(seed);
  world.user_feature_ids =
      draw_entity_features(root.fork(kUserFeatures), config.num_users,
                           config.user_feature_vocab, config.features_per_user,
                           /*vocab_offset=*/0);
  world.item_feature_ids = draw_entity_features(
      root.fork(kItemFeatures), config.num_items, config.item_feature_vocab,
      config.features_per_item,
      static_cast<std::uint32_t>(config.user_feature_vocab));

  // Independent latent weights per category for the click and conversion
  // logits; dependence between the two rates enters only through
  // confound_strength.
  rng::Stream weights = root.fork(kCategoryWeights);
  std::vector<double> w_ctr(world.num_feature_categories);
  std::vector<double> w_cvr(world.num_feature_categories);
  for (std::size_t c = 0; c < world.num_feature_categories; ++c) {
    rng::Stream s = weights.fork(c);
    w_ctr[c] = s.next_gaussian() * config.feature_logit_scale;
    w_cvr[c] = s.next_gaussian() * config.feature_logit_scale;
  }

  const std::size_t n_pairs = config.num_users * config.num_items;
  rng::Stream noise = root.fork(kPairNoise);
  std::vector<double> ctr_raw(n_pairs);
  std::vector<double> cvr_feature_part(n_pairs);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    for (std::size_t i = 0; i < config.num_items; ++i) {
      const std::size_t pair = u * config.num_items + i;
      double f_ctr = 0.0, f_cvr = 0.0;
      std::size_t n_feat = 0;
      for (std::uint32_t c : world.user_feature_ids[u]) {
        f_ctr += w_ctr[c];
        f_cvr += w_cvr[c];
        ++n_feat;
      }
      for (std::uint32_t c : world.item_feature_ids[i]) {
        f_ctr += w_ctr[c];
        f_cvr += w_cvr[c];
        ++n_feat;
      }
      f_ctr /= static_cast<double>(n_feat);
      f_cvr /= static_cast<double>(n_feat);
      rng::Stream pair_stream = noise.fork(pair);
      ctr_raw[pair] = f_ctr + pair_stream.next_gaussian() * config.ctr_noise;
      cvr_feature_part[pair] =
          f_cvr + pair_stream.next_gaussian() * config.cvr_noise;
    }
  }

  const double ctr_intercept = calibrate_intercept(ctr_raw, config.target_ctr);
  world.true_ctr.resize(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    world.true_ctr[p] = sigmoid(ctr_intercept + ctr_raw[p]);
  }

  std::vector<double> cvr_raw(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    cvr_raw[p] = cvr_feature_part[p] +
                 config.confound_strength * logit(world.true_ctr[p]);
  }
  const double cvr_intercept = calibrate_intercept(cvr_raw, config.target_cvr);
  world.true_cvr_given_click.resize(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    world.true_cvr_given_click[p] = sigmoid(cvr_intercept + cvr_raw[p]);
  }

  const double mean_ctr =
      std::accumulate(world.true_ctr.begin(), world.true_ctr.end(), 0.0) /
      static_cast<double>(n_pairs);
  if (mean_ctr < 0.8 * config.target_ctr || mean_ctr > 1.2 * config.target_ctr) {
    throw NumericError("world calibration failed: mean true CTR " +
                       std::to_string(mean_ctr) + " vs target " +
                       std::to_string(config.target_ctr));
  }
  return world;
}

SampledData sample_dataset(const SyntheticWorld& world, std::size_t n_pairs,
                           std::uint64_t seed) {
  if (n_pairs == 0) {
    throw ContractError("sample_dataset: n_pairs must be >= 1");
  }
  if (n_pairs > world.num_pairs()) {
    throw ContractError("sample_dataset: n_pairs exceeds the exposure space (" +
                        std::to_string(world.num_pairs()) + " pairs)");
  }

  rng::Stream root(seed);
  std::vector<std::uint64_t> pair_ids(world.num_pairs());
  std::iota(pair_ids.begin(), pair_ids.end(), 0);
  if (n_pairs < world.num_pairs()) {
    rng::Stream sel = root.fork(kPairSelection);
    rng::shuffle(pair_ids, sel);
    pair_ids.resize(n_pairs);
    std::sort(pair_ids.begin(), pair_ids.end());
  }

  SampledData out;
  out.dataset.provenance = data::Provenance::synthetic;
  out.dataset.num_feature_categories = world.num_feature_categories;
  out.dataset.rows.reserve(n_pairs);
  out.side.pair_ids.reserve(n_pairs);
  out.side.r_counterfactual.reserve(n_pairs);

  rng::Stream conv = root.fork(kConversionDraw);
  rng::Stream click = root.fork(kClickDraw);
  for (std::uint64_t pair : pair_ids) {
    const double u_conv = conv.fork(pair).next_unit();
    const double u_click = click.fork(pair).next_unit();
    const std::uint8_t r_cf =
        u_conv < world.true_cvr_given_click[pair] ? 1 : 0;
    const std::uint8_t o = u_click < world.true_ctr[pair] ? 1 : 0;

    data::Row row;
    row.pair_id = pair;
    row.feature_ids = world.pair_features(pair);
    row.click = o;
    row.conversion = static_cast<std::uint8_t>(o & r_cf);
    out.dataset.rows.push_back(std::move(row));
    out.side.pair_ids.push_back(pair);
    out.side.r_counterfactual.push_back(r_cf);
  }
  return out;
}

data::Dataset resample_clicks(const SyntheticWorld& world,
                              const data::SideTable& side,
                              std::uint64_t click_seed) {
  data::Dataset out;
  out.provenance = data::Provenance::synthetic;
  out.num_feature_categories = world.num_feature_categories;
  out.rows.reserve(side.size());
  rng::Stream click = rng::Stream(click_seed).fork(kClickDraw);
  for (std::size_t i = 0; i < side.size(); ++i) {
    const std::uint64_t pair = side.pair_ids[i];
    const double u_click = click.fork(pair).next_unit();
    const std::uint8_t o = u_click < world.true_ctr[pair] ? 1 : 0;
    data::Row row;
    row.pair_id = pair;
    row.feature_ids = world.pair_features(pair);
    row.click = o;
    row.conversion = static_cast<std::uint8_t>(o & side.r_counterfactual[i]);
    out.rows.push_back(std::move(row));
  }
  return out;
}

double oracle_ideal_risk(const std::vector<double>& cvr_predictions,
                         const SyntheticWorld& world,
                         const data::SideTable& side) {
  if (cvr_predictions.size() != world.num_pairs()) {
    throw ContractError("oracle_ideal_risk: need one prediction per pair");
  }
  if (side.size() == 0) {
    throw ContractError("oracle_ideal_risk: empty side table");
  }
  for (double p : cvr_predictions) {
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericError(
          "oracle_ideal_risk: predictions must lie strictly inside (0,1)");
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < side.size(); ++i) {
    const double p = cvr_predictions[side.pair_ids[i]];
    const double r = static_cast<double>(side.r_counterfactual[i]);
    acc += -r * std::log(p) - (1.0 - r) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(side.size());
}

double oracle_cvr_expectation(const SyntheticWorld& world) {
  const auto& cvr = world.true_cvr_given_click;
  if (cvr.empty()) throw ContractError("oracle_cvr_expectation: empty world");
  return std::accumulate(cvr.begin(), cvr.end(), 0.0) /
         static_cast<double>(cvr.size());
}

double ctr_cvr_correlation(const SyntheticWorld& world) {
  const std::size_t n = world.num_pairs();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    mx += world.true_ctr[p];
    my += world.true_cvr_given_click[p];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double dx = world.true_ctr[p] - mx;
    const double dy = world.true_cvr_given_click[p] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void export_dataset_csv(const data::Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "pair_id,feature_ids,o,r\n";
  for (const data::Row& row : dataset.rows) {
    out << row.pair_id << ',';
    for (std::size_t i = 0; i < row.feature_ids.size(); ++i) {
      if (i > 0) out << ';';
      out << row.feature_ids[i];
    }
    out << ',' << static_cast<int>(row.click) << ','
        << static_cast<int>(row.conversion) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

void export_side_table_csv(const data::SideTable& side, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "pair_id,r_counterfactual\n";
  for (std::size_t i = 0; i < side.size(); ++i) {
    out << side.pair_ids[i] << ',' << static_cast<int>(side.r_counterfactual[i])
        << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace escm::synth
