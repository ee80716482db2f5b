//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any of them fails.

use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedq::analysis::{
    payload_bits, rho, theorem1_bound, theorem1_terms, theorem2_bound, theorem2_terms, BitModel,
    BoundParams,
};
use fedq::bellman::value_iteration;
use fedq::compression::{
    contraction_alpha, ef_compress, selection_probabilities, sparsified_k, top_k, CompressorKind,
    CompressorSpec, EfState, ProbabilityRule,
};
use fedq::engine::{run_compfedrl, run_compfedrl_observed, ExperimentConfig, RunOutput};
use fedq::grid::{build_gridworld, parse_map};
use fedq::harness::maps::{bundled, BUNDLED};
use fedq::{NoiseSpec, QTable, RngStream, StreamPath, TabularMdp};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gridworld(name: &str, noise: NoiseSpec) -> TabularMdp {
    let grid = parse_map(bundled(name).expect("bundled map")).expect("valid map");
    build_gridworld(&grid, noise, 0.8).expect("valid gridworld")
}

fn q_star(mdp: &TabularMdp) -> QTable {
    value_iteration(mdp, 1e-12, 100_000).expect("value iteration converges")
}

fn run(cfg: &ExperimentConfig, mdp: &TabularMdp, qs: &QTable) -> RunOutput {
    run_compfedrl(cfg, mdp, qs).expect("run succeeds")
}

fn final_rmse(out: &RunOutput) -> f64 {
    out.metrics.last().unwrap().rmse
}

/// Mean RMSE trace over seeds `0..n`.
fn mean_curve(
    cfg: &ExperimentConfig,
    mdp: &TabularMdp,
    qs: &QTable,
    n: u64,
) -> (Vec<f64>, Vec<f64>) {
    let outs: Vec<RunOutput> = (0..n)
        .map(|s| {
            run(
                &ExperimentConfig {
                    master_seed: s,
                    ..cfg.clone()
                },
                mdp,
                qs,
            )
        })
        .collect();
    let len = outs[0].metrics.len();
    let rmse = (0..len)
        .map(|t| outs.iter().map(|o| o.metrics[t].rmse).sum::<f64>() / n as f64)
        .collect();
    let bits = (0..len)
        .map(|t| {
            outs.iter()
                .map(|o| o.metrics[t].bits_cumulative as f64)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    (rmse, bits)
}

fn reduction_equivalence() -> Check {
    let mdp = gridworld("map5x5", NoiseSpec::default());
    let qs = q_star(&mdp);
    let (eta, seed, rounds) = (0.1, 7, 500);
    let cfg = ExperimentConfig {
        n_agents: 1,
        local_epochs: 1,
        rounds,
        learning_rate: eta,
        federated_param: 1.0,
        master_seed: seed,
        ..Default::default()
    };
    let mut fed = Vec::new();
    run_compfedrl_observed(&cfg, &mdp, &qs, |_, q| fed.push(q.as_slice().to_vec()))
        .map_err(|e| e.to_string())?;

    // Centralized synchronous Q-learning written out directly.
    let (na, g) = (mdp.n_actions(), mdp.gamma());
    let mut q = vec![0.0f64; mdp.dim()];
    ensure(fed[0] == q, || "initial table differs".into())?;
    for t in 0..rounds {
        let mut rng = RngStream::new(seed, StreamPath::sampling(0, t, 0));
        let sample = mdp.synchronous_sample(&mut rng);
        let next: Vec<f64> = (0..q.len())
            .map(|i| {
                let s1 = sample.next_states[i];
                let v = q[s1 * na..(s1 + 1) * na]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                let target = sample.rewards[i] + g * v;
                q[i] + eta * (target - q[i])
            })
            .collect();
        q = next;
        let same = fed[t + 1]
            .iter()
            .zip(&q)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("trajectories diverge at round {}", t + 1))?;
    }
    Ok(format!("{rounds} rounds bit-identical"))
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn compressor_laws() -> Check {
    let mut gen = ChaCha8Rng::seed_from_u64(2024);
    let (d, k, n) = (10usize, 3usize, 100_000usize);
    let mut worst_z = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let (mut tested, mut outside) = (0usize, Vec::new());
    for vi in 0..20 {
        let v = random_vector(&mut gen, d);
        let p = selection_probabilities(&v, k, ProbabilityRule::L1);
        let p_min = p
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .fold(1.0f64, f64::min);
        let q2 = 1.0 / p_min - 1.0;
        let mut rng = RngStream::new(11, StreamPath::auxiliary(vi));
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut quad = vec![0.0; d];
        let mut dense = vec![0.0; d];
        for _ in 0..n {
            let h = sparsified_k(&v, k, &mut rng).map_err(|e| e.to_string())?;
            dense.iter_mut().for_each(|x| *x = 0.0);
            for (j, x) in h.iter() {
                dense[j] = x;
            }
            for j in 0..d {
                let dev = dense[j] - v[j];
                sum[j] += dense[j];
                sq[j] += dev * dev;
                quad[j] += dev * dev * dev * dev;
            }
        }
        let nf = n as f64;
        for j in 0..d {
            let var = v[j] * v[j] * (1.0 / p[j] - 1.0);
            let bound = q2 * v[j] * v[j];
            // (a) unbiasedness; the slack covers summation rounding when p_j = 1
            let se = (var / nf).sqrt();
            let err = (sum[j] / nf - v[j]).abs();
            if se > 0.0 {
                tested += 1;
                worst_z = worst_z.max(err / se);
            }
            if err > 3.0 * se + 1e-12 * v[j].abs() {
                outside.push(format!("v{vi}[{j}] z={:.2}", err / se));
            }
            // (b) variance against the Lemma 1 constant
            ensure(var <= bound * (1.0 + 1e-12), || {
                format!("vector {vi} coord {j}: analytic variance above bound")
            })?;
            let mc = sq[j] / nf;
            let mc_se = ((quad[j] / nf - mc * mc).max(0.0) / nf).sqrt();
            ensure(mc - 3.0 * mc_se <= bound, || {
                format!("vector {vi} coord {j}: MC variance {mc:.4e} above bound {bound:.4e}")
            })?;
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(mc / bound);
            }
        }
    }

    ensure(outside.is_empty(), || {
        format!(
            "{} of {tested} random coordinates outside 3 sigma ({}; {:.2} expected by chance)",
            outside.len(),
            outside.join(", "),
            tested as f64 * 0.0027
        )
    })?;

    // (c) Top-K contraction identity
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let d = gen.random_range(2..=50usize);
        let k = gen.random_range(1..=d);
        let mut v = random_vector(&mut gen, d);
        if i % 2 == 1 {
            // coarse values create ties
            v.iter_mut().for_each(|x| *x = (*x * 4.0).round() / 4.0);
        }
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            continue;
        }
        let h = top_k(&v, k).map_err(|e| e.to_string())?.to_dense();
        let lhs = h
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let alpha = contraction_alpha(&v, k).map_err(|e| e.to_string())?;
        let rhs = (1.0 - alpha) * norm;
        let gap = (lhs - rhs).abs() / norm;
        worst = worst.max(gap);
        ensure(gap <= 4.0 * f64::EPSILON, || {
            format!("vector {i}: |lhs - rhs| / ||v|| = {gap:.3e}")
        })?;
    }
    Ok(format!(
        "{tested} coordinates, max |z| {worst_z:.2}, max MC var / bound {worst_ratio:.3}, top-k gap {worst:.1e}"
    ))
}

fn error_feedback_conservation() -> Check {
    let mut gen = ChaCha8Rng::seed_from_u64(99);
    let d = 8;
    let spec = CompressorSpec::top_k(1);
    let mut state = EfState::new(d);
    let mut rng = RngStream::from_seed(0);
    let mut sum_h = vec![0.0; d];
    let mut sum_delta = vec![0.0; d];
    let mut e_norms = Vec::new();
    let (mut alpha_min, mut b) = (1.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let delta = random_vector(&mut gen, d);
        b = b.max(delta.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let input: Vec<f64> = delta
            .iter()
            .zip(state.error())
            .map(|(x, e)| x + e)
            .collect();
        alpha_min = alpha_min.min(contraction_alpha(&input, 1).map_err(|e| e.to_string())?);
        let h = ef_compress(&mut state, &delta, &spec, &mut rng).map_err(|e| e.to_string())?;
        h.add_to(&mut sum_h, 1.0);
        for (s, x) in sum_delta.iter_mut().zip(&delta) {
            *s += x;
        }
        e_norms.push(state.linf_norm());
        let scale = sum_delta
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1.0);
        let resid = (0..d)
            .map(|j| (sum_h[j] + state.error()[j] - sum_delta[j]).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(resid / scale);
    }
    ensure(worst <= 1e-9, || {
        format!("relative conservation error {worst:.3e}")
    })?;
    let ceiling = 2.0 * (1.0 - alpha_min) * b / alpha_min;
    let e_max = e_norms.iter().copied().fold(0.0f64, f64::max);
    ensure(e_max < ceiling, || {
        format!("max ||e|| {e_max:.4} reaches ceiling {ceiling:.4}")
    })?;
    Ok(format!(
        "conservation error {worst:.1e}, max ||e|| {e_max:.3} < ceiling {ceiling:.3} (alpha_min {alpha_min:.4})"
    ))
}

fn bellman_residual(mdp: &TabularMdp, q: &QTable) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let future: f64 = mdp
                .transition(s, a)
                .iter()
                .map(|&(s1, p)| p * q.row(s1).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .sum();
            let t = mdp.reward_mean(s, a) + mdp.gamma() * future;
            worst = worst.max((t - q.get(s, a)).abs());
        }
    }
    worst
}

fn oracle_correctness() -> Check {
    let mut report = Vec::new();
    for (name, text) in BUNDLED {
        let mdp = build_gridworld(&parse_map(text).unwrap(), NoiseSpec::default(), 0.8).unwrap();
        let q = value_iteration(&mdp, 1e-10, 100_000).map_err(|e| e.to_string())?;
        let r = bellman_residual(&mdp, &q);
        ensure(r <= 1e-10, || format!("{name}: residual {r:.3e}"))?;
        report.push(format!("{name} {r:.1e}"));
    }
    let mdp = build_gridworld(&parse_map("G.").unwrap(), NoiseSpec::noiseless(), 0.8).unwrap();
    let q = value_iteration(&mdp, 1e-10, 100_000).map_err(|e| e.to_string())?;
    let (left, right) = (q.get(1, 2), q.get(1, 3));
    ensure(
        (left - 1.0).abs() <= 1e-9 && (right + 0.2).abs() <= 1e-9,
        || format!("\"G.\": Q*(1,left) = {left}, Q*(1,right) = {right}"),
    )?;
    Ok(format!(
        "residuals {}; \"G.\" fixed point matched",
        report.join(", ")
    ))
}

fn fig1_trend() -> Check {
    let mdp = gridworld("map5x5", NoiseSpec::noiseless());
    let qs = q_star(&mdp);
    let base = ExperimentConfig {
        n_agents: 20,
        local_epochs: 1,
        rounds: 2000,
        learning_rate: 0.05,
        federated_param: 0.8,
        ..Default::default()
    };
    let mut good = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let at = |spec| {
            run(
                &ExperimentConfig {
                    master_seed: seed,
                    ..base.clone()
                }
                .with_compressor(spec),
                &mdp,
                &qs,
            )
        };
        let id = final_rmse(&at(CompressorSpec::identity()));
        let top = final_rmse(&at(CompressorSpec::top_k(5)));
        let sp = final_rmse(&at(CompressorSpec::sparsified_k(5)));
        let ok = id <= top && top <= 1.5 * id && sp > top;
        good += ok as usize;
        rows.push(format!(
            "seed {seed}: id {id:.2e} top5 {top:.2e} sp5 {sp:.2e}"
        ));
    }
    ensure(good >= 8, || {
        format!("ordering held in {good}/10 seeds [{}]", rows.join("; "))
    })?;
    Ok(format!("ordering held in {good}/10 seeds"))
}

fn agent_speedup() -> Check {
    let mdp = gridworld("map5x5", NoiseSpec::default());
    let qs = q_star(&mdp);
    let at = |agents| {
        let cfg = ExperimentConfig {
            n_agents: agents,
            local_epochs: 1,
            rounds: 2000,
            learning_rate: 0.1,
            federated_param: 0.8,
            ..Default::default()
        }
        .with_compressor(CompressorSpec::top_k(5));
        (0..10)
            .map(|s| {
                final_rmse(&run(
                    &ExperimentConfig {
                        master_seed: s,
                        ..cfg.clone()
                    },
                    &mdp,
                    &qs,
                ))
            })
            .sum::<f64>()
            / 10.0
    };
    let (one, fifty) = (at(1), at(50));
    ensure(fifty < one && fifty <= 0.6 * one, || {
        format!("I=1: {one:.4}, I=50: {fifty:.4}")
    })?;
    Ok(format!(
        "mean final RMSE I=1 {one:.4}, I=50 {fifty:.4} (ratio {:.3})",
        fifty / one
    ))
}

fn local_epoch_saving() -> Check {
    let mdp = gridworld("map5x5", NoiseSpec::default());
    let qs = q_star(&mdp);
    let base = ExperimentConfig {
        n_agents: 50,
        learning_rate: 0.01,
        federated_param: 0.8,
        ..Default::default()
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for spec in [CompressorSpec::identity(), CompressorSpec::top_k(5)] {
        let cfg = |k, t| {
            ExperimentConfig {
                local_epochs: k,
                rounds: t,
                ..base.clone()
            }
            .with_compressor(spec)
        };
        let (ref_rmse, ref_bits) = mean_curve(&cfg(1, 2000), &mdp, &qs, 5);
        let (target, budget) = (
            ref_rmse.last().unwrap() * 1.1,
            ref_bits.last().unwrap() / 5.0,
        );
        let (rmse, bits) = mean_curve(&cfg(10, 200), &mdp, &qs, 5);
        let best = rmse.iter().copied().fold(f64::INFINITY, f64::min);
        match rmse.iter().position(|&r| r <= target) {
            Some(t) if bits[t] <= budget => notes.push(format!(
                "{spec}: {:.4} at round {t} with {:.0} of {budget:.0} bits",
                rmse[t], bits[t]
            )),
            Some(t) => {
                ok = false;
                notes.push(format!(
                    "{spec}: reached at round {t} with {:.0} > {budget:.0} bits",
                    bits[t]
                ))
            }
            None => {
                ok = false;
                notes.push(format!(
                    "{spec}: K=10 best {best:.4} never within 10% of K=1 final {:.4}",
                    target / 1.1
                ))
            }
        }
    }
    ensure(ok, || notes.join("; "))?;
    Ok(notes.join("; "))
}

fn learning_rate_tradeoff() -> Check {
    // the open 5x5 grid starts below 0.5 RMSE, the walled one above it
    let mdp = gridworld("map5x5w", NoiseSpec::default());
    let qs = q_star(&mdp);
    let start = run(
        &ExperimentConfig {
            rounds: 1,
            ..Default::default()
        },
        &mdp,
        &qs,
    )
    .metrics[0]
        .rmse;
    ensure(start > 0.5, || {
        format!("initial RMSE {start:.3} already below 0.5")
    })?;
    let mut reach = Vec::new();
    let mut plateau = Vec::new();
    for eta in [0.01, 0.1, 0.5] {
        let cfg = ExperimentConfig {
            n_agents: 50,
            local_epochs: 1,
            rounds: 3000,
            learning_rate: eta,
            federated_param: 0.8,
            ..Default::default()
        }
        .with_compressor(CompressorSpec::top_k(5));
        let (rmse, _) = mean_curve(&cfg, &mdp, &qs, 10);
        let t = rmse
            .iter()
            .position(|&r| r <= 0.5)
            .ok_or_else(|| format!("eta {eta}: never below 0.5"))?;
        let tail = &rmse[rmse.len() - 500..];
        reach.push(t);
        plateau.push(tail.iter().sum::<f64>() / tail.len() as f64);
    }
    let detail = format!("rounds to 0.5 {reach:?}, plateaus {:.4?}", plateau);
    ensure(reach[0] > reach[1] && reach[1] > reach[2], || {
        format!("speed not monotone: {detail}")
    })?;
    ensure(plateau[0] <= plateau[1] && plateau[1] <= plateau[2], || {
        format!("accuracy not monotone: {detail}")
    })?;
    Ok(detail)
}

fn bit_accounting() -> Check {
    let mdp = gridworld("map11x11", NoiseSpec::default());
    let d = mdp.dim();
    ensure(d == 484, || format!("map11x11 has {d} entries"))?;
    let bm = BitModel::new(d, 32);
    let mut index_bits = 0;
    while (1usize << index_bits) < d {
        index_bits += 1;
    }
    ensure(index_bits == 9, || "index width".into())?;
    ensure(
        payload_bits(CompressorKind::Identity, d, 0, &bm) == 15_488,
        || "identity formula".into(),
    )?;
    ensure(
        payload_bits(CompressorKind::TopK, d, 50, &bm) == 2050,
        || "top-50 formula".into(),
    )?;

    let qs = q_star(&mdp);
    let base = ExperimentConfig {
        n_agents: 4,
        rounds: 5,
        learning_rate: 0.5,
        ..Default::default()
    };
    for (spec, expect) in [
        (CompressorSpec::identity(), Some(15_488u64)),
        (CompressorSpec::top_k(50), Some(2050)),
        (CompressorSpec::sparsified_k(50), None),
    ] {
        let out = run(&base.clone().with_compressor(spec), &mdp, &qs);
        for m in &out.metrics[1..] {
            let want = expect.unwrap_or((m.payload_entries * (index_bits + 32)) as u64);
            ensure(m.bits_round == want, || {
                format!(
                    "{spec} round {}: {} bits, expected {want}",
                    m.round, m.bits_round
                )
            })?;
        }
    }
    Ok("15488 / 2050 / entries x 41 bits per round".into())
}

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

struct Hp {
    cc: Consts,
}

impl Hp {
    fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }
    fn n(&self, x: usize) -> BigFloat {
        BigFloat::from_u64(x as u64, PREC)
    }
    fn ln(&mut self, x: &BigFloat) -> BigFloat {
        x.ln(PREC, RM, &mut self.cc)
    }
}

fn add(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.add(b, PREC, RM)
}
fn sub(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.sub(b, PREC, RM)
}
fn mul(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.mul(b, PREC, RM)
}
fn div(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.div(b, PREC, RM)
}
fn sqrt(a: &BigFloat) -> BigFloat {
    a.sqrt(PREC, RM)
}

/// `|x - exact| / |exact|` in high precision.
fn rel_err(x: f64, exact: &BigFloat) -> f64 {
    let diff = div(&sub(&BigFloat::from_f64(x, PREC), exact), exact).abs();
    diff.to_string().parse::<f64>().unwrap_or(f64::INFINITY)
}

/// Both bounds re-evaluated from the displayed formulas at 256 bits.
fn hp_bounds(hp: &mut Hp, p: &BoundParams) -> (BigFloat, BigFloat, BigFloat) {
    let one = hp.f(1.0);
    let (beta, eta, g) = (hp.f(p.beta), hp.f(p.eta), hp.f(p.gamma));
    let (k, t, i) = (hp.n(p.local_epochs), hp.n(p.rounds), hp.n(p.agents));
    let sa = hp.n(p.n_states * p.n_actions);
    let delta = hp.f(p.delta);
    let decay = sub(&one, &eta).powi(p.local_epochs, PREC, RM);
    let rho = add(&sub(&one, &beta), &mul(&beta, &decay));
    let contraction = mul(&rho.powi(p.rounds, PREC, RM), &hp.f(p.q0_gap));
    let one_g = sub(&one, &g);
    let c = mul(&one_g, &sub(&one, &decay));
    let bias = div(&mul(&hp.f(2.0), &g), &c);
    let eta_i = mul(&eta, &i);
    let scale = hp.f(p.reward_scale);
    let satk = mul(&mul(&sa, &t), &k);

    let l1 = hp.ln(&div(&mul(&hp.f(4.0), &satk), &delta));
    let e1 = mul(
        &mul(&div(&mul(&hp.f(4.0), &g), &c), &sqrt(&l1)),
        &add(&one, &div(&sqrt(&l1), &sqrt(&eta_i))),
    );
    let lt = hp.ln(&div(&mul(&hp.f(4.0), &t), &delta));
    let first = sqrt(&mul(
        &mul(
            &hp.f(16.0),
            &div(
                &mul(&mul(&hp.f(4.0), &hp.f(p.q2)), &sa),
                &mul(&one_g, &one_g),
            ),
        ),
        &lt,
    ));
    let second = mul(
        &div(&hp.f(4.0), &hp.f(3.0)),
        &mul(
            &div(&mul(&mul(&hp.f(2.0), &hp.f(p.q_inf)), &sqrt(&i)), &one_g),
            &lt,
        ),
    );
    let e2 = div(&add(&first, &second), &sub(&one, &decay));
    let t1 = add(
        &add(&contraction, &mul(&scale, &mul(&sqrt(&div(&eta, &i)), &e1))),
        &mul(&scale, &add(&bias, &div(&e2, &sqrt(&i)))),
    );

    let l2 = hp.ln(&div(&mul(&hp.f(2.0), &satk), &delta));
    let e1b = add(&one, &div(&sqrt(&l2), &sqrt(&eta_i)));
    let sampling = mul(
        &div(&hp.f(4.0), &c),
        &mul(&sqrt(&mul(&div(&eta, &i), &l2)), &e1b),
    );
    let d_const = add(&one, &div(&add(&one, &decay), &sub(&one, &decay)));
    let alpha = hp.f(p.alpha);
    let comp = mul(
        &div(
            &mul(&mul(&hp.f(2.0), &beta), &sub(&one, &alpha)),
            &mul(&alpha, &one_g),
        ),
        &d_const,
    );
    let t2 = add(
        &contraction,
        &mul(&scale, &add(&add(&sampling, &bias), &comp)),
    );
    (rho, t1, t2)
}

fn bound_evaluators() -> Check {
    let mut hp = Hp {
        cc: Consts::new().expect("constants cache"),
    };
    let mut gen = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for n in 0..100 {
        let p_min: f64 = gen.random_range(0.01..=1.0);
        let q2 = 1.0 / p_min - 1.0;
        let p = BoundParams {
            beta: gen.random_range(0.05..=1.0),
            eta: gen.random_range(0.001..=1.0),
            gamma: gen.random_range(0.05..0.99),
            local_epochs: gen.random_range(1..=20),
            rounds: gen.random_range(1..=5000),
            agents: gen.random_range(1..=200),
            delta: gen.random_range(0.001..0.5),
            n_states: gen.random_range(1..=300),
            n_actions: gen.random_range(1..=8),
            q2,
            q_inf: q2.max(1.0),
            alpha: gen.random_range(0.01..=1.0),
            q0_gap: gen.random_range(0.0..10.0),
            reward_scale: gen.random_range(0.5..2.0),
        };
        let (r, t1, t2) = hp_bounds(&mut hp, &p);
        let errs = [
            rel_err(rho(p.beta, p.eta, p.local_epochs).unwrap(), &r),
            rel_err(theorem1_bound(&p).unwrap(), &t1),
            rel_err(theorem2_bound(&p).unwrap(), &t2),
        ];
        for (which, e) in ["rho", "theorem1", "theorem2"].iter().zip(errs) {
            ensure(e <= 1e-12, || {
                format!("set {n}: {which} relative error {e:.3e}")
            })?;
            worst = worst.max(e);
        }

        let exact = BoundParams {
            q2: 0.0,
            q_inf: 0.0,
            alpha: 1.0,
            ..p
        };
        let a = theorem1_terms(&exact).unwrap();
        let b = theorem2_terms(&exact).unwrap();
        ensure(a.compression == 0.0 && b.compression == 0.0, || {
            format!("set {n}: reduction leaves a compression term")
        })?;
        ensure(a.total() == a.contraction + a.sampling + a.bias, || {
            format!("set {n}: theorem1 reduction")
        })?;
        ensure(b.total() == b.contraction + b.sampling + b.bias, || {
            format!("set {n}: theorem2 reduction")
        })?;
    }
    Ok(format!(
        "100 parameter sets, worst relative error {worst:.1e}"
    ))
}

fn run_cli(threads: usize, manifest: &Path, root: &Path) -> std::result::Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_fedq"))
        .args(["--threads", &threads.to_string(), "sweep"])
        .arg(manifest)
        .env("FEDQ_OUTPUT_ROOT", root)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || {
        format!("--threads {threads} exited with {status}")
    })
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn thread_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = tmp.path().join("sweep.toml");
    std::fs::write(
        &manifest,
        r#"map = "bundled:map5x5w"
output_dir = "out"
n_seeds = 2

[config]
n_agents = 12
local_epochs = 2
rounds = 60
learning_rate = 0.2

[sweep]
compressor = ["identity", "top:6", "sparsified:6"]
"#,
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_cli(1, &manifest, &a)?;
    run_cli(8, &manifest, &b)?;
    let (fa, fb) = (csv_files(&a.join("out")), csv_files(&b.join("out")));
    ensure(!fa.is_empty(), || "no CSV output".into())?;
    ensure(fa == fb, || {
        "CSV outputs differ between thread counts".into()
    })?;
    Ok(format!("{} CSV files byte-identical", fa.len()))
}

type Criterion = (&'static str, Option<u64>, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("reduction equivalence", Some(5), reduction_equivalence),
        ("compressor laws", Some(30), compressor_laws),
        (
            "error-feedback conservation",
            None,
            error_feedback_conservation,
        ),
        ("oracle correctness", None, oracle_correctness),
        ("compressor ordering trend", Some(120), fig1_trend),
        ("agent speed-up", Some(180), agent_speedup),
        (
            "local-epoch communication saving",
            Some(120),
            local_epoch_saving,
        ),
        ("learning-rate trade-off", None, learning_rate_tradeoff),
        ("bit accounting", None, bit_accounting),
        ("bound evaluators", None, bound_evaluators),
        ("determinism under parallelism", None, thread_determinism),
    ];
    let mut failed = 0;
    for (n, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(msg), Some(s)) if elapsed > Duration::from_secs(*s) => {
                Err(format!("{msg}; took {elapsed:.1?}, limit {s} s"))
            }
            (r, _) => r,
        };
        match result {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} ({elapsed:.2?})", n + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} ({elapsed:.2?})", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
