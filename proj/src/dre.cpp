#include "sixo/dre.hpp"

#include <cmath>
#include <numeric>

#include "sixo/errors.hpp"
#include "sixo/ops.hpp"

namespace sixo {

namespace {

Matrix gather(const Matrix& m, std::span<const Index> items) {
  Matrix out(static_cast<Index>(items.size()), m.cols());
  for (std::size_t i = 0; i < items.size(); ++i) out.row(static_cast<Index>(i)) = m.row(items[i]);
  return out;
}

}  // namespace

DreBatch DreBatch::select(std::span<const Index> items) const {
  DreBatch out;
  for (const Matrix& m : positives) out.positives.push_back(gather(m, items));
  for (const Matrix& m : negatives) out.negatives.push_back(gather(m, items));
  std::vector<Matrix> ys(observations.mask().size());
  for (int t = 1; t <= observations.length(); ++t) {
    if (observations.present(t)) ys[static_cast<std::size_t>(t - 1)] = gather(observations.at(t), items);
  }
  out.observations = Observations(std::move(ys), observations.mask());
  return out;
}

DreBatch generate_training_batch(const StateSpaceModel& model, RngStream rng, Index M) {
  if (M < 1) throw ContractViolation("DRE pool needs at least one trajectory");
  Dataset joint = simulate(model, M, rng.split("positive"));
  Dataset prior = simulate(model, M, rng.split("negative"), false);
  return {std::move(joint.latents), std::move(prior.latents), std::move(joint.observations)};
}

Tensor dre_loss(const Twist& twist, const StateSpaceModel& model, const DreBatch& batch) {
  const int T = model.length();
  if (static_cast<int>(batch.positives.size()) != T || static_cast<int>(batch.negatives.size()) != T) {
    throw ContractViolation("DRE batch length does not match the model");
  }
  if (T < 2) return Tensor::scalar(0.0);
  const TwistContext ctx = twist.encode(model, batch.observations);
  std::vector<Tensor> terms;
  terms.reserve(static_cast<std::size_t>(T - 1));
  for (int t = 1; t < T; ++t) {
    const Tensor pos = twist.log_twist(model, ctx, t, Tensor(batch.positives[static_cast<std::size_t>(t - 1)]));
    const Tensor neg = twist.log_twist(model, ctx, t, Tensor(batch.negatives[static_cast<std::size_t>(t - 1)]));
    terms.push_back(sum(log_sigmoid(pos) + log_sigmoid(-neg)));
  }
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return total / static_cast<double>((T - 1) * batch.size());
}

std::vector<double> twist_update(Twist& twist, const StateSpaceModel& model,
                                 const DreConfig& config, RngStream rng, Adam& optimizer) {
  if (config.batch_size < 1 || config.steps < 0) throw ConfigError("invalid DRE configuration");
  if (!optimizer.options().maximize) throw ConfigError("DRE twist updates ascend the loss");
  std::vector<double> losses;
  if (config.steps == 0) return losses;
  const DreBatch pool = generate_training_batch(model, rng.split("pool"), config.pool_size);
  const Index M = pool.size();
  const Index B = std::min(config.batch_size, M);
  std::vector<Index> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream shuffle = rng.split("shuffle");
  Index cursor = M;
  std::uint64_t epoch = 0;
  optimizer.set_learning_rate(config.learning_rate);
  losses.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    if (cursor + B > M) {
      RngStream e = shuffle.split(epoch++);
      for (Index i = M - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[e.below(static_cast<std::uint64_t>(i + 1))]);
      cursor = 0;
    }
    const DreBatch mb = pool.select(std::span<const Index>(order).subspan(static_cast<std::size_t>(cursor), static_cast<std::size_t>(B)));
    cursor += B;
    Tape tape;
    auto tracked = twist.clone();
    tracked->set_parameters(twist.parameters().tracked(tape));
    const Tensor loss = dre_loss(*tracked, model, mb);
    const Gradient g = grad(loss, tracked->parameters());
    bool finite = std::isfinite(loss.item());
    for (const auto& [name, m] : g.values) finite = finite && m.allFinite();
    if (!finite) {
      throw TrainingAborted(step, "non-finite DRE loss or gradient at twist step " + std::to_string(step) +
                                      " (loss " + std::to_string(loss.item()) + ")");
    }
    ParameterSet values = twist.parameters().values();
    optimizer.step(values, g.values);
    twist.set_values(values);
    losses.push_back(loss.item());
  }
  return losses;
}

std::vector<double> twist_update(Twist& twist, const StateSpaceModel& model,
                                 const DreConfig& config, RngStream rng) {
  AdamOptions options;
  options.learning_rate = config.learning_rate;
  options.maximize = true;
  Adam optimizer(options);
  return twist_update(twist, model, config, rng, optimizer);
}

}  // namespace sixo
