//! Integration, rollout, and trajectory-supervised training.
//!
//! Training samples fixed-length windows from the trajectories, rolls the
//! network forward through each window, and backpropagates the summed
//! per-step position MSE through every integration and graph build back
//! to the parameters. That chain is what teaches the network to correct
//! its own drift: prediction errors at step t become perturbed inputs at
//! step t+1 inside the same loss.

use nalgebra::Vector3;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::graph::{build_graph, graph_backward};
use crate::dynamics::net::{gnn_backward, gnn_forward, GnnParams, Normalizer};
use crate::dynamics::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::ClothMesh;
use crate::grad::{adam_step, AdamHyper, AdamState};
use crate::synth::Trajectory;

/// One row of the training log: epoch index, mean window loss over the
/// epoch, and the most recently evaluated held-out rollout RMSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub node_loss: f64,
    pub holdout_rmse: f64,
}

/// Saves a training log as `epoch,node_loss,holdout_rmse` CSV.
pub fn write_train_log(path: &std::path::Path, log: &[TrainLogRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|r| vec![r.epoch.to_string(), r.node_loss.to_string(), r.holdout_rmse.to_string()])
        .collect();
    crate::io::write_csv(path, &["epoch", "node_loss", "holdout_rmse"], &rows)
}

/// Reads a training log written by [`write_train_log`].
pub fn read_train_log(path: &std::path::Path) -> Result<Vec<TrainLogRow>> {
    let (header, rows) = crate::io::read_csv(path)?;
    if header != ["epoch", "node_loss", "holdout_rmse"] {
        return Err(Error::Format(format!(
            "{}: unexpected training log header {header:?}",
            path.display()
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let ctx = |e: &dyn std::fmt::Display| {
                Error::Format(format!("{}:{}: {e}", path.display(), i + 2))
            };
            Ok(TrainLogRow {
                epoch: row[0].parse().map_err(|e| ctx(&e))?,
                node_loss: row[1].parse().map_err(|e| ctx(&e))?,
                holdout_rmse: row[2].parse().map_err(|e| ctx(&e))?,
            })
        })
        .collect()
}

/// Steps positions forward: `x_next = 2 x_now - x_prev + a`, where `a` is
/// the denormalized network output. Pinned nodes take their scripted
/// positions when given and otherwise hold still.
pub fn integrate(
    x_prev: &[Vector3<f64>],
    x_now: &[Vector3<f64>],
    accel_norm: &Array2<f64>,
    norm_accel: &Normalizer,
    pinned: &[u32],
    scripted: Option<&[Vector3<f64>]>,
) -> Result<Vec<Vector3<f64>>> {
    let k = x_now.len();
    if x_prev.len() != k || accel_norm.nrows() != k || accel_norm.ncols() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "{} previous, {} current, {}x{} accelerations",
            x_prev.len(),
            k,
            accel_norm.nrows(),
            accel_norm.ncols()
        )));
    }
    if let Some(s) = scripted {
        if s.len() != k {
            return Err(Error::ShapeMismatch(format!("{} scripted positions for {k} nodes", s.len())));
        }
    }
    let accel = norm_accel.denormalize(accel_norm);
    let mut x_next: Vec<Vector3<f64>> = (0..k)
        .map(|i| {
            2.0 * x_now[i] - x_prev[i]
                + Vector3::new(accel[[i, 0]], accel[[i, 1]], accel[[i, 2]])
        })
        .collect();
    for &p in pinned {
        let p = p as usize;
        x_next[p] = match scripted {
            Some(s) => s[p],
            None => x_now[p],
        };
    }
    Ok(x_next)
}

/// Recursively applies the network from the seed pair `(x0, x1)`.
///
/// The output holds the first `steps` frames of `[x0, x1, predictions...]`,
/// so `steps = 0` is empty and the first genuine prediction is frame 2.
/// `script`, when given, supplies full per-frame positions from which only
/// pinned rows are read. Any coordinate leaving a ball of radius 1000x
/// the rest diagonal aborts with the offending step.
pub fn rollout(
    params: &GnnParams,
    mesh: &ClothMesh,
    x0: &[Vector3<f64>],
    x1: &[Vector3<f64>],
    steps: usize,
    dt: f64,
    script: Option<&[Vec<Vector3<f64>>]>,
) -> Result<Trajectory> {
    params.validate()?;
    let k = mesh.num_nodes();
    if x0.len() != k || x1.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "seed frames have {} and {} nodes, mesh has {k}",
            x0.len(),
            x1.len()
        )));
    }
    let bound = 1e3 * mesh.bbox_diagonal().max(1e-6);
    let mut frames = vec![x0.to_vec(), x1.to_vec()];
    for t in 2..steps {
        let (x_prev, x_now) = {
            let (a, b) = frames.split_at(t - 1);
            (a.last().unwrap(), b.first().unwrap())
        };
        let graph = build_graph(x_prev, x_now, mesh)?;
        let (accel, _) = gnn_forward(params, &graph)?;
        let scripted = script.and_then(|s| s.get(t)).map(|v| v.as_slice());
        let x_next = integrate(x_prev, x_now, &accel, &params.norm.accel, &mesh.pinned, scripted)?;
        if x_next.iter().any(|p| !p.iter().all(|c| c.is_finite()) || p.norm() > bound) {
            return Err(Error::NumericBlowup { step: t });
        }
        frames.push(x_next);
    }
    frames.truncate(steps);
    Ok(Trajectory::new(frames, dt))
}

/// Everything kept alive for the backward sweep of one window step.
struct StepTape {
    graph: crate::dynamics::MeshGraph,
    cache: crate::dynamics::GnnCache,
}

/// Forward + backward of one training window, accumulating the parameter
/// gradient. `states[0..2]` are the (noisy) seed frames; `targets[t]` is
/// the clean position array the prediction of frame t+2 is compared to.
/// Returns the window's node loss.
fn window_pass(
    params: &GnnParams,
    mesh: &ClothMesh,
    seeds: [&[Vector3<f64>]; 2],
    targets: &[Vec<Vector3<f64>>],
    grad: &mut [f64],
) -> Result<f64> {
    let k = mesh.num_nodes();
    let horizon = targets.len();
    let mut states: Vec<Vec<Vector3<f64>>> = vec![seeds[0].to_vec(), seeds[1].to_vec()];
    let mut tapes: Vec<StepTape> = Vec::with_capacity(horizon);
    let mut loss = 0.0;

    for t in 0..horizon {
        let graph = build_graph(&states[t], &states[t + 1], mesh)?;
        let (accel, cache) = gnn_forward(params, &graph)?;
        let x_next = integrate(
            &states[t],
            &states[t + 1],
            &accel,
            &params.norm.accel,
            &mesh.pinned,
            Some(&targets[t]),
        )?;
        loss += x_next
            .iter()
            .zip(&targets[t])
            .map(|(p, g)| (p - g).norm_squared())
            .sum::<f64>()
            / k as f64;
        tapes.push(StepTape { graph, cache });
        states.push(x_next);
    }
    if !loss.is_finite() {
        return Err(Error::NumericBlowup { step: horizon });
    }

    // Reverse sweep. d_states[t] accumulates the loss gradient with
    // respect to frame t of the window (seeds included; their gradient is
    // discarded since seeds are data, not parameters).
    let mut d_states: Vec<Vec<Vector3<f64>>> = vec![vec![Vector3::zeros(); k]; horizon + 2];
    for t in (0..horizon).rev() {
        // Loss term on the prediction of frame t+2.
        for i in 0..k {
            d_states[t + 2][i] += 2.0 / k as f64 * (states[t + 2][i] - targets[t][i]);
        }
        // Pinned rows were overwritten by the script, so no gradient
        // reaches the network through them.
        let mut d_next = d_states[t + 2].clone();
        for &p in &mesh.pinned {
            d_next[p as usize] = Vector3::zeros();
        }
        // x_next = 2 x_now - x_prev + accel * std + mean.
        let mut d_accel = Array2::zeros((k, 3));
        for i in 0..k {
            for c in 0..3 {
                d_accel[[i, c]] = d_next[i][c] * params.norm.accel.std[c];
            }
            d_states[t + 1][i] += 2.0 * d_next[i];
            d_states[t][i] -= d_next[i];
        }
        let (g_theta, d_node_raw, d_edge_raw) = gnn_backward(params, &tapes[t].cache, &d_accel)?;
        grad.iter_mut().zip(&g_theta).for_each(|(g, &d)| *g += d);
        let (d_prev, d_now) = graph_backward(&tapes[t].graph, &d_node_raw, &d_edge_raw)?;
        for i in 0..k {
            d_states[t][i] += d_prev[i];
            d_states[t + 1][i] += d_now[i];
        }
    }
    Ok(loss)
}

/// Pooled standard deviation of per-step displacement components across
/// the training trajectories; the noise scale is a multiple of this.
fn displacement_std(trajs: &[&Trajectory]) -> f64 {
    let mut n = 0.0;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for traj in trajs {
        for t in 1..traj.len() {
            for (a, b) in traj.positions[t].iter().zip(&traj.positions[t - 1]) {
                for c in 0..3 {
                    let d = a[c] - b[c];
                    n += 1.0;
                    sum += d;
                    sum_sq += d * d;
                }
            }
        }
    }
    if n == 0.0 {
        return 0.0;
    }
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0).sqrt()
}

/// Fits the network to recorded trajectories.
///
/// Each epoch samples one window per training trajectory, runs the
/// forward/backward window pass, and takes one Adam step per window.
/// Normalization statistics accumulate over the first epoch only and are
/// frozen afterwards. With two or more trajectories the last one is held
/// out entirely and scored by full-rollout RMSE every `eval_every` epochs;
/// a single trajectory is scored against itself.
pub fn train_gnn(
    trajs: &[Trajectory],
    mesh: &ClothMesh,
    cfg: &TrainConfig,
) -> Result<(GnnParams, Vec<TrainLogRow>)> {
    cfg.validate()?;
    if trajs.is_empty() {
        return Err(Error::InsufficientData("no training trajectories".into()));
    }
    for traj in trajs {
        traj.validate()?;
        if traj.num_nodes() != mesh.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "trajectory has {} nodes, mesh has {}",
                traj.num_nodes(),
                mesh.num_nodes()
            )));
        }
    }
    let (train, holdout): (&[Trajectory], &Trajectory) = if trajs.len() >= 2 {
        (&trajs[..trajs.len() - 1], trajs.last().unwrap())
    } else {
        (trajs, &trajs[0])
    };
    // A window needs two seed frames plus rollout_t targets.
    let min_len = cfg.rollout_t + 2;
    if !train.iter().any(|t| t.len() >= min_len) {
        return Err(Error::InsufficientData(format!(
            "no training trajectory reaches {min_len} frames (window {} + 2 seeds)",
            cfg.rollout_t
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = GnnParams::new(cfg.width, cfg.blocks, cfg.seed ^ 0x9e3779b97f4a7c15)?;
    let mut adam = AdamState::new(params.theta.len());
    let hyper = AdamHyper::with_lr(cfg.lr);
    let sigma = cfg.noise_mult * displacement_std(&train.iter().collect::<Vec<_>>());
    let noise = if sigma > 0.0 { Some(Normal::new(0.0, sigma).expect("finite sigma")) } else { None };

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut holdout_rmse = f64::NAN;
    for epoch in 1..=cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut windows = 0usize;
        for traj in train {
            if traj.len() < min_len {
                continue;
            }
            let start = rng.gen_range(0..=traj.len() - min_len);
            let mut seed0 = traj.positions[start].clone();
            let mut seed1 = traj.positions[start + 1].clone();
            if let Some(dist) = &noise {
                for (i, (a, b)) in seed0.iter_mut().zip(seed1.iter_mut()).enumerate() {
                    if mesh.is_pinned(i) {
                        continue; // boundary nodes are scripted, never noisy
                    }
                    for c in 0..3 {
                        a[c] += dist.sample(&mut rng);
                        b[c] += dist.sample(&mut rng);
                    }
                }
            }
            let targets = &traj.positions[start + 2..start + min_len];

            if epoch == 1 {
                let graph = build_graph(&seed0, &seed1, mesh)?;
                params.norm.node.accumulate(graph.node_feats.view());
                params.norm.edge.accumulate(graph.edge_feats.view());
                let mut accels = Array2::zeros((cfg.rollout_t * mesh.num_nodes(), 3));
                for (t, target) in targets.iter().enumerate() {
                    let (prev, now) = (
                        &traj.positions[start + t],
                        &traj.positions[start + t + 1],
                    );
                    for i in 0..mesh.num_nodes() {
                        let a = target[i] - 2.0 * now[i] + prev[i];
                        for c in 0..3 {
                            accels[[t * mesh.num_nodes() + i, c]] = a[c];
                        }
                    }
                }
                params.norm.accel.accumulate(accels.view());
            }

            let mut grad = vec![0.0; params.theta.len()];
            let loss = window_pass(&params, mesh, [&seed0, &seed1], targets, &mut grad).map_err(
                |e| match e {
                    Error::NumericBlowup { .. } => Error::NumericBlowup { step: epoch },
                    other => other,
                },
            )?;
            adam_step(&mut params.theta, &grad, &mut adam, &hyper)?;
            epoch_loss += loss;
            windows += 1;
        }
        if epoch == 1 {
            params.norm.freeze();
        }

        let node_loss = epoch_loss / windows.max(1) as f64;
        if epoch == 1 || epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let pred = rollout(
                &params,
                mesh,
                &holdout.positions[0],
                &holdout.positions[1],
                holdout.len(),
                holdout.dt,
                Some(&holdout.positions),
            )?;
            holdout_rmse = if holdout.len() > 2 {
                crate::losses::rollout_rmse(&pred.positions, &holdout.positions, 2..holdout.len())?
            } else {
                0.0
            };
        }
        log.push(TrainLogRow { epoch, node_loss, holdout_rmse });
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::net::zero_decoder_output;
    use crate::synth::{simulate_cloth, PinnedEdge, SimParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;

    fn quad_mesh() -> ClothMesh {
        ClothMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.1),
                Vector3::new(1.0, 1.0, 0.0),
                Vector3::new(0.0, 1.0, 0.2),
            ],
            vec![
                Vector2::new(0.0, 0.0),
                Vector2::new(1.0, 0.0),
                Vector2::new(1.0, 1.0),
                Vector2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn integrate_zero_accel_continues_uniformly() {
        let mesh = quad_mesh();
        let x_prev = mesh.world_pos.clone();
        let shift = Vector3::new(0.1, 0.0, -0.05);
        let x_now: Vec<_> = x_prev.iter().map(|p| p + shift).collect();
        let accel = Array2::zeros((4, 3));
        let norm = Normalizer::new(3);
        let next = integrate(&x_prev, &x_now, &accel, &norm, &[], None).unwrap();
        for (n, c) in next.iter().zip(&x_now) {
            assert_abs_diff_eq!((n - c - shift).norm(), 0.0, epsilon = 1e-15);
        }
        // At rest with zero acceleration nothing moves.
        let still = integrate(&x_prev, &x_prev, &accel, &norm, &[], None).unwrap();
        assert_eq!(still, x_prev);
    }

    #[test]
    fn constant_accel_displacement_follows_the_double_sum() {
        // From rest, x_{n} - x_0 under constant a is a * n(n+1)/2 ... for
        // the recurrence x_{t+1} = 2 x_t - x_{t-1} + a the second
        // difference is a each step, so after n predicted steps from
        // (x0, x0) the offset is a * n(n+1)/2.
        let mesh = quad_mesh();
        let a = Vector3::new(0.001, -0.002, 0.0005);
        let mut accel = Array2::zeros((4, 3));
        for i in 0..4 {
            for c in 0..3 {
                accel[[i, c]] = a[c];
            }
        }
        let norm = Normalizer::new(3);
        let n_steps = 7;
        let mut prev = mesh.world_pos.clone();
        let mut now = mesh.world_pos.clone();
        for _ in 0..n_steps {
            let next = integrate(&prev, &now, &accel, &norm, &[], None).unwrap();
            prev = now;
            now = next;
        }
        let expected = a * (n_steps * (n_steps + 1)) as f64 / 2.0;
        for (final_p, start) in now.iter().zip(&mesh.world_pos) {
            assert_abs_diff_eq!((final_p - start - expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn integrate_pins_follow_script_or_hold() {
        let mesh = quad_mesh();
        let mut accel = Array2::zeros((4, 3));
        accel.fill(1.0);
        let norm = Normalizer::new(3);
        let held = integrate(&mesh.world_pos, &mesh.world_pos, &accel, &norm, &[0], None).unwrap();
        assert_eq!(held[0], mesh.world_pos[0]);
        assert_ne!(held[1], mesh.world_pos[1]);

        let mut script = mesh.world_pos.clone();
        script[0] = Vector3::new(9.0, 9.0, 9.0);
        let scripted =
            integrate(&mesh.world_pos, &mesh.world_pos, &accel, &norm, &[0], Some(&script))
                .unwrap();
        assert_eq!(scripted[0], script[0]);
    }

    #[test]
    fn rollout_length_contract_and_empty_case() {
        let mesh = quad_mesh();
        let mut params = GnnParams::new(8, 1, 0).unwrap();
        zero_decoder_output(&mut params);
        let x0 = mesh.world_pos.clone();
        let x1 = mesh.world_pos.clone();
        for steps in [0usize, 1, 2, 5] {
            let traj = rollout(&params, &mesh, &x0, &x1, steps, 0.02, None).unwrap();
            assert_eq!(traj.len(), steps);
        }
    }

    #[test]
    fn zero_accel_rollout_extends_linear_drift_exactly() {
        let mesh = quad_mesh();
        let mut params = GnnParams::new(8, 2, 1).unwrap();
        zero_decoder_output(&mut params);
        let drift = Vector3::new(0.003, 0.001, -0.002);
        let x0 = mesh.world_pos.clone();
        let x1: Vec<_> = x0.iter().map(|p| p + drift).collect();
        // No pins for this one: pure inertial motion everywhere.
        let free_mesh = ClothMesh::new(
            mesh.world_pos.clone(),
            mesh.mesh_pos.clone(),
            mesh.faces.clone(),
            vec![],
        )
        .unwrap();
        let traj = rollout(&params, &free_mesh, &x0, &x1, 6, 0.02, None).unwrap();
        for (t, frame) in traj.positions.iter().enumerate() {
            for (p, start) in frame.iter().zip(&x0) {
                let expected = start + drift * t as f64;
                assert_abs_diff_eq!((p - expected).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rollout_keeps_pinned_nodes_on_script() {
        let mesh = quad_mesh();
        let params = GnnParams::new(8, 2, 2).unwrap();
        let x0 = mesh.world_pos.clone();
        let x1 = mesh.world_pos.clone();
        // Script moves the pinned node 0 along +z each frame.
        let script: Vec<Vec<Vector3<f64>>> = (0..8)
            .map(|t| {
                let mut f = mesh.world_pos.clone();
                f[0].z += 0.1 * t as f64;
                f
            })
            .collect();
        let traj = rollout(&params, &mesh, &x0, &x1, 8, 0.02, Some(&script)).unwrap();
        for t in 2..8 {
            assert_eq!(traj.positions[t][0], script[t][0]);
        }
    }

    #[test]
    fn diverging_params_raise_numeric_blowup() {
        let mesh = quad_mesh();
        let mut params = GnnParams::new(4, 1, 0).unwrap();
        // A wildly biased decoder accelerates every node by ~1e5 per step.
        let layout = params.layout();
        params.theta[layout.decoder.b2()].fill(1e5);
        let x0 = mesh.world_pos.clone();
        let err = rollout(&params, &mesh, &x0, &x0, 10, 0.02, None).unwrap_err();
        assert!(matches!(err, Error::NumericBlowup { .. }));
    }

    /// The window pass is the training loop's core; verify its parameter
    /// gradient against central differences of the full multi-step loss.
    #[test]
    fn window_gradient_matches_finite_differences() {
        let mesh = quad_mesh();
        let mut params = GnnParams::new(4, 2, 9).unwrap();
        params.norm.node.freeze();
        params.norm.edge.freeze();
        params.norm.accel =
            Normalizer::from_stats(vec![0.001, -0.002, 0.0005], vec![0.02, 0.03, 0.01]).unwrap();

        let x0 = mesh.world_pos.clone();
        let x1: Vec<_> = x0
            .iter()
            .enumerate()
            .map(|(i, p)| p + Vector3::new(0.01, -0.005 * i as f64, 0.02))
            .collect();
        let targets: Vec<Vec<Vector3<f64>>> = (0..3)
            .map(|t| {
                x1.iter()
                    .enumerate()
                    .map(|(i, p)| {
                        p + Vector3::new(0.02 * (t + 1) as f64, 0.001 * i as f64, -0.01)
                    })
                    .collect()
            })
            .collect();

        let objective = |p: &GnnParams| {
            let mut sink = vec![0.0; p.theta.len()];
            window_pass(p, &mesh, [&x0, &x1], &targets, &mut sink).unwrap()
        };

        let mut grad = vec![0.0; params.theta.len()];
        window_pass(&params, &mesh, [&x0, &x1], &targets, &mut grad).unwrap();

        let h = 1e-6;
        let n = params.theta.len();
        let mut checked = 0;
        for idx in (0..n).step_by(n / 83 + 1) {
            let mut plus = params.clone();
            plus.theta[idx] += h;
            let mut minus = params.clone();
            minus.theta[idx] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert_abs_diff_eq!(grad[idx], fd, epsilon = 3e-5);
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn training_on_constant_trajectories_keeps_the_cloth_put() {
        let mesh = quad_mesh();
        let frames = vec![mesh.world_pos.clone(); 12];
        let traj = Trajectory::new(frames, 0.02);
        let cfg = TrainConfig {
            width: 8,
            blocks: 2,
            rollout_t: 4,
            epochs: 10,
            eval_every: 5,
            ..TrainConfig::default()
        };
        let (params, log) = train_gnn(&[traj.clone()], &mesh, &cfg).unwrap();
        assert_eq!(log.len(), cfg.epochs);
        let pred = rollout(
            &params,
            &mesh,
            &traj.positions[0],
            &traj.positions[1],
            traj.len(),
            traj.dt,
            None,
        )
        .unwrap();
        let tol = 1e-3 * mesh.bbox_diagonal();
        for frame in &pred.positions {
            for (p, rest) in frame.iter().zip(&mesh.world_pos) {
                assert!((p - rest).norm() < tol, "drifted {}", (p - rest).norm());
            }
        }
    }

    #[test]
    fn training_reduces_node_loss_on_a_simulated_flag() {
        let (mesh, traj) = simulate_cloth(&SimParams {
            nx: 6,
            ny: 6,
            steps: 24,
            pinned: PinnedEdge::Left,
            ..SimParams::default()
        })
        .unwrap();
        // Noise injection puts a floor under the window loss, so train clean
        // here; the noisy path is covered by the determinism test and the
        // robustness acceptance runs.
        let cfg = TrainConfig {
            width: 16,
            blocks: 2,
            rollout_t: 8,
            epochs: 150,
            eval_every: 50,
            noise_mult: 0.0,
            seed: 0,
            ..TrainConfig::default()
        };
        let (_, log) = train_gnn(&[traj], &mesh, &cfg).unwrap();
        let first = log.first().unwrap().node_loss;
        let last = log.last().unwrap().node_loss;
        assert!(
            last < 0.1 * first,
            "loss went {first:.3e} -> {last:.3e}, wanted a 10x reduction"
        );
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let (mesh, traj) = simulate_cloth(&SimParams {
            nx: 4,
            ny: 4,
            steps: 14,
            ..SimParams::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            width: 8,
            blocks: 1,
            rollout_t: 4,
            epochs: 3,
            eval_every: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let (params_a, log_a) = train_gnn(&[traj.clone()], &mesh, &cfg).unwrap();
        let (params_b, log_b) = train_gnn(&[traj], &mesh, &cfg).unwrap();
        assert_eq!(params_a.theta, params_b.theta);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn too_short_trajectories_are_rejected() {
        let mesh = quad_mesh();
        let traj = Trajectory::new(vec![mesh.world_pos.clone(); 5], 0.02);
        let cfg = TrainConfig { rollout_t: 8, ..TrainConfig::default() };
        assert!(matches!(
            train_gnn(&[traj], &mesh, &cfg),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            train_gnn(&[], &mesh, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn train_log_survives_the_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let log = vec![
            TrainLogRow { epoch: 1, node_loss: 0.8476321, holdout_rmse: 0.0312 },
            TrainLogRow { epoch: 2, node_loss: 1.0 / 3.0, holdout_rmse: f64::MIN_POSITIVE },
        ];
        write_train_log(&path, &log).unwrap();
        // Shortest round-trip float formatting makes this exact, not close.
        assert_eq!(read_train_log(&path).unwrap(), log);

        std::fs::write(&path, "epoch,loss\n1,2\n").unwrap();
        assert!(matches!(read_train_log(&path), Err(Error::Format(_))));
        std::fs::write(&path, "epoch,node_loss,holdout_rmse\n1,abc,0\n").unwrap();
        assert!(matches!(read_train_log(&path), Err(Error::Format(_))));
    }
}
