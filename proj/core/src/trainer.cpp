// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "kadp/kinematics.hpp"
#include "kadp/rng.hpp"

namespace kadp {

namespace {

constexpr char kStateMagic[8] = {'K', 'A', 'D', 'P', 'T', 'S', '0', '1'};

void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t read_i64(std::istream& is, const char* what) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error(std::string("train state: truncated reading ") + what);
  return v;
}

void write_vecd(std::ostream& os, const std::vector<double>& v) {
  write_i64(os, static_cast<std::int64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_vecd(std::istream& is, const char* what) {
  const std::int64_t n = read_i64(is, what);
  if (n < 0 || n > (std::int64_t{1} << 32))
    throw std::runtime_error(std::string("train state: implausible count for ") + what);
  std::vector<double> v(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error(std::string("train state: truncated reading ") + what);
  return v;
}

// Everything that fixes the course of a run; resuming against a state file
// written under a different setup is an error, not a silent divergence.
std::uint64_t setup_hash(const DenoiserConfig& dc, const KinematicChain& chain,
                         const MlpIkModel* ik_mlp, const TrainConfig& config,
                         std::int64_t n_samples) {
  std::uint64_t h = fnv1a(kStateMagic, sizeof(kStateMagic));
  const std::uint64_t ids[4] = {dc.hash(), chain.hash(),
                                ik_mlp != nullptr ? ik_mlp->weights_hash() : 0,
                                static_cast<std::uint64_t>(config.seed)};
  h = fnv1a_append(h, ids, sizeof(ids));
  const std::int64_t ints[7] = {static_cast<std::int64_t>(config.representation),
                                config.constrained ? 1 : 0,
                                config.schedule_steps,
                                static_cast<std::int64_t>(config.schedule_kind),
                                config.epochs,
                                config.batch_size,
                                n_samples};
  h = fnv1a_append(h, ints, sizeof(ints));
  const double reals[2] = {config.learning_rate, config.weight_decay};
  return fnv1a_append(h, reals, sizeof(reals));
}

void fit_normalization(DenoiserModel& model, const TrainSet& set) {
  const int token = model.config.token_dim();
  const int prop = model.config.proprio_dim();
  const int m = model.config.n_nodes;

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(token), sq = Eigen::VectorXd::Zero(token);
  std::int64_t cols = 0;
  for (const Eigen::MatrixXd& t : set.targets) {
    sum += t.rowwise().sum();
    sq += t.cwiseProduct(t).rowwise().sum();
    cols += t.cols();
  }
  auto finish = [](Eigen::VectorXd& mean, Eigen::VectorXd& scale, const Eigen::VectorXd& s,
                   const Eigen::VectorXd& s2, std::int64_t n, double floor) {
    mean = s / static_cast<double>(n);
    const Eigen::VectorXd var = (s2 / static_cast<double>(n) - mean.cwiseProduct(mean)).cwiseMax(0.0);
    scale = var.cwiseSqrt().cwiseMax(floor);
  };
  // Action channels get a desk-scale floor (5 cm / 0.05 rad / 5% gripper):
  // diffusion drives the noised inputs far off the data manifold, and a
  // near-constant channel must not blow the normalized values up.
  finish(model.act_mean, model.act_scale, sum, sq, cols, 0.05);

  Eigen::VectorXd psum = Eigen::VectorXd::Zero(prop), psq = Eigen::VectorXd::Zero(prop);
  Eigen::Vector3d csum = Eigen::Vector3d::Zero(), csq = Eigen::Vector3d::Zero();
  std::int64_t pcols = 0, points = 0;
  for (const PolicySample& s : set.samples) {
    for (const NodeState& ns : s.obs.proprio) {
      Eigen::VectorXd col(prop);
      col.head(3 * m) = Eigen::Map<const Eigen::VectorXd>(ns.positions.data(), 3 * m);
      col[3 * m] = ns.gripper;
      psum += col;
      psq += col.cwiseProduct(col);
      ++pcols;
    }
    for (const Eigen::Matrix3Xd& cloud : s.obs.point_sets) {
      csum += cloud.rowwise().sum();
      csq += cloud.cwiseProduct(cloud).rowwise().sum();
      points += cloud.cols();
    }
  }
  finish(model.prop_mean, model.prop_scale, psum, psq, pcols, 1e-6);
  Eigen::VectorXd pm, ps;
  finish(pm, ps, csum, csq, points, 1e-6);
  model.point_mean = pm;
  model.point_scale = ps;
}

}  // namespace

std::string representation_name(Representation rep) {
  switch (rep) {
    case Representation::kNode: return "node";
    case Representation::kJoint: return "joint";
    case Representation::kEndEffector: return "ee";
  }
  throw std::invalid_argument("representation_name: unknown representation");
}

Representation representation_from_name(const std::string& name) {
  if (name == "node") return Representation::kNode;
  if (name == "joint") return Representation::kJoint;
  if (name == "ee") return Representation::kEndEffector;
  throw std::invalid_argument("unknown representation: " + name + " (want node|joint|ee)");
}

int action_channels(Representation rep, const KinematicChain& chain) {
  switch (rep) {
    case Representation::kNode: return 3 * chain.n_nodes() + 1;
    case Representation::kJoint: return chain.n_dof() + 1;
    case Representation::kEndEffector: return 10;
  }
  throw std::invalid_argument("action_channels: unknown representation");
}

std::vector<Demonstration> restrict_demo_nodes(const std::vector<Demonstration>& demos,
                                               const std::vector<int>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("restrict_demo_nodes: empty node list");
  std::vector<Demonstration> out = demos;
  for (Demonstration& demo : out) {
    for (DemoFrame& f : demo.frames) {
      auto take = [&](const Eigen::Matrix3Xd& src) {
        Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(nodes.size()));
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          if (nodes[i] < 0 || nodes[i] >= src.cols())
            throw std::invalid_argument("restrict_demo_nodes: node index out of range");
          dst.col(static_cast<Eigen::Index>(i)) = src.col(nodes[i]);
        }
        return dst;
      };
      f.proprio.positions = take(f.proprio.positions);
      f.action.positions = take(f.action.positions);
    }
  }
  return out;
}

Eigen::VectorXd joint_action_token(const KinematicChain& chain, const JointVector& q,
                                   double gripper) {
  if (q.size() != chain.n_dof()) throw std::invalid_argument("joint_action_token: wrong dof");
  Eigen::VectorXd token(chain.n_dof() + 1);
  token.head(chain.n_dof()) = q;
  token[chain.n_dof()] = gripper;
  return token;
}

Eigen::VectorXd ee_action_token(const KinematicChain& chain, const JointVector& q,
                                double gripper) {
  const GripperFrame frame = gripper_frame(chain, q);
  Eigen::VectorXd token(10);
  token.head(3) = frame.origin;
  token.segment(3, 3) = frame.rotation.col(0);
  token.segment(6, 3) = frame.rotation.col(1);
  token[9] = gripper;
  return token;
}

TrainSet prepare_train_set(const std::vector<Demonstration>& demos, const KinematicChain& chain,
                           Representation rep, int obs_frames, int horizon) {
  const int m = chain.n_nodes();
  Eigen::Index points = -1;
  for (const Demonstration& demo : demos) {
    for (const DemoFrame& f : demo.frames) {
      if (f.proprio.positions.cols() != m || f.action.positions.cols() != m)
        throw std::invalid_argument("prepare_train_set: demo node count does not match the chain");
      if (points < 0) points = f.cloud.cols();
      if (f.cloud.cols() != points)
        throw std::invalid_argument("prepare_train_set: inconsistent cloud sizes across demos");
    }
  }

  TrainSet set;
  set.samples = extract_policy_samples(demos, obs_frames, horizon);
  set.targets.reserve(set.samples.size());

  if (rep == Representation::kNode) {
    for (const PolicySample& s : set.samples) set.targets.push_back(chunk_to_tokens(s.chunk, m));
    return set;
  }

  // Lift each demo's recorded actions once, warm-chained, then window the
  // per-frame tokens with the same repeat-last rule the chunks used.
  const NodeToJointMap ik = exact_ik_map(chain, IkWeights::uniform(m));
  for (const Demonstration& demo : demos) {
    const int n = static_cast<int>(demo.frames.size());
    if (n == 0) continue;
    ActionChunk all;
    for (const DemoFrame& f : demo.frames) all.steps.push_back(f.action);
    const JointChunk lifted = lift_chunk(ik, all, chain.mid_config());
    Eigen::MatrixXd tokens(action_channels(rep, chain), n);
    for (int t = 0; t < n; ++t) {
      tokens.col(t) = rep == Representation::kJoint
                          ? joint_action_token(chain, lifted.q[static_cast<std::size_t>(t)],
                                               lifted.gripper[t])
                          : ee_action_token(chain, lifted.q[static_cast<std::size_t>(t)],
                                            lifted.gripper[t]);
    }
    for (int t = 0; t < n; ++t) {
      Eigen::MatrixXd target(tokens.rows(), horizon);
      for (int j = 0; j < horizon; ++j) target.col(j) = tokens.col(std::min(n - 1, t + j));
      set.targets.push_back(std::move(target));
    }
  }
  if (set.targets.size() != set.samples.size())
    throw std::logic_error("prepare_train_set: sample/target count mismatch");
  return set;
}

double training_loss_on(const DenoiserModel& model, const NoiseSchedule& schedule,
                        const KinematicChain& chain, const NodeToJointMap* ik_mlp,
                        const TrainSet& set, const std::vector<int>& indices, bool constrained,
                        Rng& rng, DenoiserModel* grads) {
  const int B = static_cast<int>(indices.size());
  if (B == 0) throw std::invalid_argument("training loss: empty batch");
  const int T = model.config.horizon;
  const int To = model.config.obs_frames;
  const int P = model.config.points;
  const int token = model.config.token_dim();
  const int prop = model.config.proprio_dim();
  const int m = model.config.n_nodes;
  if (constrained) {
    if (ik_mlp == nullptr)
      throw std::invalid_argument("training loss: constrained noising needs an IK map");
    if (token != 3 * m + 1)
      throw std::invalid_argument("training loss: constrained noising needs node tokens");
  }

  DenoiserBatch batch;
  batch.noised.resize(token, B * T);
  batch.target.resize(token, B * T);
  batch.points.resize(3, static_cast<Eigen::Index>(B) * To * P);
  batch.proprio.resize(prop, B * To);
  batch.steps.resize(B);

  for (int b = 0; b < B; ++b) {
    const int idx = indices[static_cast<std::size_t>(b)];
    if (idx < 0 || idx >= static_cast<int>(set.samples.size()))
      throw std::invalid_argument("training loss: sample index out of range");
    const PolicySample& s = set.samples[static_cast<std::size_t>(idx)];
    const Eigen::MatrixXd& target = set.targets[static_cast<std::size_t>(idx)];
    if (target.rows() != token || target.cols() != T)
      throw std::invalid_argument("training loss: target shape does not match the model");
    if (static_cast<int>(s.obs.point_sets.size()) != To ||
        static_cast<int>(s.obs.proprio.size()) != To)
      throw std::invalid_argument("training loss: observation window does not match the model");

    const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(schedule.K)));
    batch.steps[b] = static_cast<double>(k);
    if (constrained) {
      const Eigen::MatrixXd eps = rng.normal_matrix(chain.n_dof(), T);
      const Eigen::VectorXd eps_gripper = rng.normal_vector(T);
      const NoisedChunk noised = forward_noise(schedule, chain, *ik_mlp, s.chunk, k, eps, eps_gripper);
      batch.noised.middleCols(b * T, T) = chunk_to_tokens(noised.chunk, m);
    } else {
      // Unconstrained variants diffuse in the model's normalized action
      // space; the batch carries real units, so map the noised value back.
      const double ab = schedule.alpha_bar_at(k);
      const Eigen::MatrixXd eps = rng.normal_matrix(token, T);
      const Eigen::MatrixXd x0 =
          (target.colwise() - model.act_mean).array().colwise() / model.act_scale.array();
      const Eigen::MatrixXd xk = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
      batch.noised.middleCols(b * T, T) =
          (xk.array().colwise() * model.act_scale.array()).colwise() + model.act_mean.array();
    }
    batch.target.middleCols(b * T, T) = target;

    for (int f = 0; f < To; ++f) {
      const Eigen::Matrix3Xd& cloud = s.obs.point_sets[static_cast<std::size_t>(f)];
      const NodeState& ns = s.obs.proprio[static_cast<std::size_t>(f)];
      if (cloud.cols() != P || ns.positions.cols() != m)
        throw std::invalid_argument("training loss: observation shape does not match the model");
      batch.points.middleCols((static_cast<Eigen::Index>(b) * To + f) * P, P) = cloud;
      batch.proprio.col(b * To + f).head(3 * m) =
          Eigen::Map<const Eigen::VectorXd>(ns.positions.data(), 3 * m);
      batch.proprio(3 * m, b * To + f) = ns.gripper;
    }
  }
  return denoiser_loss(model, batch, grads);
}

double training_loss(const DenoiserModel& model, const NoiseSchedule& schedule,
                     const KinematicChain& chain, const NodeToJointMap& ik_mlp,
                     const std::vector<PolicySample>& batch, Rng& rng, DenoiserModel* grads) {
  TrainSet set;
  set.samples = batch;
  const int m = model.config.n_nodes;
  std::vector<int> indices;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    set.targets.push_back(chunk_to_tokens(batch[i].chunk, m));
    indices.push_back(static_cast<int>(i));
  }
  return training_loss_on(model, schedule, chain, &ik_mlp, set, indices, /*constrained=*/true, rng,
                          grads);
}

TrainResult train_policy(const std::vector<Demonstration>& demos, const KinematicChain& chain,
                         const MlpIkModel* ik_mlp, const TrainConfig& config, Rng& rng) {
  if (config.epochs < 1 || config.batch_size < 1 || config.obs_frames < 1 || config.horizon < 1 ||
      config.schedule_steps < 1 || config.checkpoint_every < 1)
    throw std::invalid_argument("train_policy: counts must be positive");
  if (!(config.learning_rate > 0.0) || config.weight_decay < 0.0)
    throw std::invalid_argument("train_policy: bad optimizer settings");
  if (config.constrained) {
    if (config.representation != Representation::kNode)
      throw std::invalid_argument("train_policy: constrained noising applies to the node representation");
    if (ik_mlp == nullptr)
      throw std::invalid_argument("train_policy: constrained noising needs the IK surrogate");
  }
  if (ik_mlp != nullptr) ik_mlp_check_chain(*ik_mlp, chain);

  const TrainSet set =
      prepare_train_set(demos, chain, config.representation, config.obs_frames, config.horizon);
  const int n_samples = static_cast<int>(set.samples.size());
  if (n_samples == 0) throw std::invalid_argument("train_policy: empty dataset");

  DenoiserConfig dc;
  dc.n_nodes = chain.n_nodes();
  dc.horizon = config.horizon;
  dc.obs_frames = config.obs_frames;
  dc.points = static_cast<int>(set.samples[0].obs.point_sets[0].cols());
  dc.width = config.width;
  dc.cond_width = config.cond_width;
  dc.blocks = config.blocks;
  dc.point_hidden = config.point_hidden;
  dc.mlp_mult = config.mlp_mult;
  dc.unet = config.unet;
  dc.action_override =
      config.representation == Representation::kNode ? 0 : action_channels(config.representation, chain);

  const NoiseSchedule schedule = make_schedule(config.schedule_steps, config.schedule_kind);
  const NodeToJointMap ik_map = ik_mlp != nullptr ? mlp_ik_map(*ik_mlp, chain) : NodeToJointMap{};

  DenoiserModel model = make_denoiser(dc, rng);
  fit_normalization(model, set);
  model.chain_hash = chain.hash();
  model.ikmlp_hash = ik_mlp != nullptr ? ik_mlp->weights_hash() : 0;

  AdamW opt(AdamWConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  DenoiserModel grads = model;  // shape clone; zeroed before every batch

  const std::uint64_t setup = setup_hash(dc, chain, ik_mlp, config, n_samples);
  std::vector<double> curve, wall;
  Eigen::VectorXd best_params = pack_params(model.params());
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int done_epochs = 0;

  const bool on_disk = !config.run_dir.empty();
  const std::filesystem::path run_dir(config.run_dir);
  const std::filesystem::path state_path = run_dir / "train_state.bin";
  const std::filesystem::path model_path = run_dir / "model.bin";
  const std::filesystem::path csv_path = run_dir / "loss.csv";

  auto save_state = [&]() {
    std::ofstream os(state_path, std::ios::binary);
    if (!os) throw std::runtime_error("train_policy: cannot write " + state_path.string());
    os.write(kStateMagic, sizeof(kStateMagic));
    os.write(reinterpret_cast<const char*>(&setup), sizeof(setup));
    write_i64(os, done_epochs);
    write_i64(os, best_epoch);
    os.write(reinterpret_cast<const char*>(&best_loss), sizeof(best_loss));
    write_vecd(os, curve);
    write_vecd(os, wall);
    write_vecd(os, std::vector<double>(best_params.data(), best_params.data() + best_params.size()));
    rng.save_state(os);
    opt.save_state(os);
    save_params(os, model.params());
    if (!os) throw std::runtime_error("train_policy: write failed for " + state_path.string());
  };

  if (on_disk) {
    std::filesystem::create_directories(run_dir);
    if (std::filesystem::exists(state_path)) {
      std::ifstream is(state_path, std::ios::binary);
      char magic[8];
      is.read(magic, sizeof(magic));
      std::uint64_t stored = 0;
      is.read(reinterpret_cast<char*>(&stored), sizeof(stored));
      if (!is || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0)
        throw std::runtime_error("train_policy: malformed resume state " + state_path.string());
      if (stored != setup)
        throw std::runtime_error("train_policy: resume state does not match this configuration");
      done_epochs = static_cast<int>(read_i64(is, "epoch count"));
      best_epoch = static_cast<int>(read_i64(is, "best epoch"));
      is.read(reinterpret_cast<char*>(&best_loss), sizeof(best_loss));
      curve = read_vecd(is, "loss curve");
      wall = read_vecd(is, "wall curve");
      const std::vector<double> bp = read_vecd(is, "best parameters");
      if (bp.size() != static_cast<std::size_t>(best_params.size()))
        throw std::runtime_error("train_policy: resume state parameter size mismatch");
      best_params = Eigen::Map<const Eigen::VectorXd>(bp.data(), best_params.size());
      rng.load_state(is);
      opt.load_state(is, model.params());
      load_params(is, model.params());
      if (!is) throw std::runtime_error("train_policy: truncated resume state");
    }
  }

  auto write_csv = [&]() {
    std::ofstream os(csv_path);
    os << "epoch,loss,wall_seconds\n";
    char line[96];
    for (std::size_t e = 0; e < curve.size(); ++e) {
      std::snprintf(line, sizeof(line), "%zu,%.17g,%.3f\n", e + 1, curve[e], wall[e]);
      os << line;
    }
  };

  std::vector<int> perm(static_cast<std::size_t>(n_samples));
  const int resume_base = done_epochs;
  for (int epoch = done_epochs + 1; epoch <= config.epochs; ++epoch) {
    if (config.stop_after_epochs > 0 && epoch - resume_base > config.stop_after_epochs) break;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n_samples; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = n_samples - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < n_samples; start += config.batch_size) {
      const int count = std::min(config.batch_size, n_samples - start);
      const std::vector<int> indices(perm.begin() + start, perm.begin() + start + count);
      zero_all(grads.params());
      const double loss = training_loss_on(model, schedule, chain,
                                           ik_mlp != nullptr ? &ik_map : nullptr, set, indices,
                                           config.constrained, rng, &grads);
      opt.step(model.params(), grads.params());
      loss_sum += loss * count;
    }
    const double epoch_loss = loss_sum / n_samples;
    curve.push_back(epoch_loss);
    wall.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    done_epochs = epoch;

    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best_epoch = epoch;
      best_params = pack_params(model.params());
      if (on_disk) {
        DenoiserModel best = model;
        unpack_params(best.params(), best_params);
        save_denoiser(best, model_path.string());
      }
    }
    if (on_disk) {
      write_csv();
      if (epoch % config.checkpoint_every == 0 || epoch == config.epochs) save_state();
    }
  }

  TrainResult result;
  unpack_params(model.params(), best_params);
  result.model = std::move(model);
  result.loss_curve = std::move(curve);
  result.best_loss = best_loss;
  result.best_epoch = best_epoch;
  return result;
}

}  // namespace kadp
