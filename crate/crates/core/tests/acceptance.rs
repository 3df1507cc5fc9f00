//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use rand::Rng;
use snmpp::likelihood::{per_sequence_nll, sequence_nll, sequence_nll_grad, stratified_integral, uniform_integral};
use snmpp::model::{hard_clip, soft_clip};
use snmpp::predict::{bootstrap_ci, constant_baseline, evaluate, expected_wait, ConfidenceInterval};
use snmpp::rng;
use snmpp::simulate::{generate_dataset, sample_many, thinning_sample, Dataset};
use snmpp::train::{train, LrSchedule, TrainConfig};
use snmpp::{
    mean_inter_event_time, Estimator, Event, EventSequence, Generator, Homogeneous, Link, ModelSpec, ModelView,
    NllConfig, OptimizerConfig, PredictConfig, Snmpp, SupplyChainConfig,
};
use std::time::Instant;

struct Suite {
    failures: usize,
    total: usize,
}

impl Suite {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

struct Recipe {
    link: Link,
    lr: f64,
    weight_decay: f64,
    batch: usize,
    epochs: usize,
    model_seed: u64,
}

fn fit(name: &str, data: &Dataset, k: usize, r: &Recipe) -> Snmpp {
    let mut model = Snmpp::new(ModelSpec::new(k, r.link), r.model_seed).unwrap();
    let config = TrainConfig {
        optimizer: OptimizerConfig {
            learning_rate: r.lr,
            batch_size: r.batch,
            weight_decay: r.weight_decay,
            ..Default::default()
        },
        epochs: r.epochs,
        patience: r.epochs,
        schedule: LrSchedule::Cosine { final_fraction: 0.03 },
        ..Default::default()
    };
    let out = train(&mut model, &data.train, &data.val, &config, |e| {
        eprintln!("  [{name}] epoch {:>2} train {:.4} val {:.4} {:.0}s", e.epoch, e.train_nll, e.val_nll, e.wall_seconds);
    })
    .unwrap();
    eprintln!("  [{name}] best epoch {} ({:?})", out.best_epoch, out.stop);
    out.best
}

fn peak_influence(view: &ModelView, src: usize, tgt: usize, dt_max: f64) -> (f64, f64) {
    (0..=2000)
        .map(|i| dt_max * i as f64 / 2000.0)
        .map(|dt| (dt, view.influence(src, tgt, dt)))
        .fold((0.0, 0.0), |best, x| if x.1.abs() > best.1.abs() { x } else { best })
}

fn fmt_ci(c: &ConfidenceInterval) -> String {
    format!("{:.4} [{:.4}, {:.4}]", c.estimate, c.lower, c.upper)
}

/// Trained model against the constant-rate fit on the same training data:
/// paired per-sequence bootstrap of the NLL gain and the RMSE gain.
fn beats_constant(suite: &mut Suite, name: &str, model: &Snmpp, data: &Dataset, test: &[EventSequence]) {
    let k = model.spec().num_types;
    let view = model.view();
    let base = constant_baseline(&data.train, k);
    let gap = mean_inter_event_time(&data.train).unwrap();
    let pc = PredictConfig::default();
    let nll_cfg = NllConfig { seed: 99, ..Default::default() };
    let m_rep = evaluate(&view, test, gap, &pc).unwrap();
    let b_rep = evaluate(&base, test, gap, &pc).unwrap();
    let m_nll = per_sequence_nll(&view, test, &nll_cfg);
    let b_nll = per_sequence_nll(&base, test, &nll_cfg);
    // (NLL gain, model squared error, baseline squared error, events) per test sequence.
    let mut units: Vec<(f64, f64, f64, usize)> = m_nll.iter().zip(&b_nll).map(|(a, b)| (b.total_nll - a.total_nll, 0.0, 0.0, 0)).collect();
    for (p, q) in m_rep.predictions.iter().zip(&b_rep.predictions) {
        let u = &mut units[p.seq];
        u.1 += p.residual().powi(2);
        u.2 += q.residual().powi(2);
        u.3 += 1;
    }
    let nll_ci = bootstrap_ci(&units, |u| u.iter().map(|x| x.0).sum::<f64>() / u.len() as f64, 1000, 0.95, 1);
    let rmse_ci = bootstrap_ci(
        &units,
        |u| {
            let n = u.iter().map(|x| x.3).sum::<usize>().max(1) as f64;
            let model = (u.iter().map(|x| x.1).sum::<f64>() / n).sqrt();
            let base = (u.iter().map(|x| x.2).sum::<f64>() / n).sqrt();
            base - model
        },
        1000,
        0.95,
        2,
    );
    let pass = nll_ci.lower > 0.0 && rmse_ci.lower > 0.0;
    suite.report(
        &format!("{name} beats constant baseline"),
        pass,
        format!(
            "NLL gain {}, RMSE gain {} (model RMSE {:.4} vs {:.4}, {} test events)",
            fmt_ci(&nll_ci),
            fmt_ci(&rmse_ci),
            m_rep.time_rmse,
            b_rep.time_rmse,
            m_rep.n_events
        ),
    );
}

fn lemma_variance(suite: &mut Suite) {
    let (q, n, l) = (4usize, 100_000u64, 2.0);
    let f = |t: f64| 1.0 + t;
    let strat: Vec<f64> = (0..n).map(|i| stratified_integral(f, 0.0, l, q, &mut rng::stream(101, &[i]))).collect();
    let unif: Vec<f64> = (0..n).map(|i| uniform_integral(f, 0.0, l, q, &mut rng::stream(202, &[i]))).collect();
    let (ms, vs) = mean_var(&strat);
    let (_, vu) = mean_var(&unif);
    let w = l / q as f64;
    let mus: Vec<f64> = (0..q).map(|j| f(w * (j as f64 + 0.5))).collect();
    let mbar = mus.iter().sum::<f64>() / q as f64;
    let predicted = l * l / (q * q) as f64 * mus.iter().map(|m| (m - mbar).powi(2)).sum::<f64>();
    let gap = vu - vs;
    let se = (vs / n as f64).sqrt();
    let pass = vs < vu && (gap / predicted - 1.0).abs() < 0.10 && (ms - 4.0).abs() < 3.0 * se;
    suite.report(
        "stratified variance reduction",
        pass,
        format!("var strat {vs:.5} < uniform {vu:.5}; gap {gap:.5} vs predicted {predicted:.5}; mean {ms:.5} (se {se:.1e})"),
    );
}

fn soft_clip_convergence(suite: &mut Suite) {
    let grid: Vec<f64> = (0..=7000).map(|i| -3.0 + 7.0 * i as f64 / 7000.0).collect();
    let devs: Vec<f64> = [1.0, 0.5, 0.1, 0.01]
        .iter()
        .map(|&s| grid.iter().map(|&x| (soft_clip(x, 0.0, 1.0, s) - hard_clip(x, 0.0, 1.0)).abs()).fold(0.0, f64::max))
        .collect();
    let monotone = devs.windows(2).all(|w| w[1] < w[0]);
    suite.report(
        "soft clip converges to hard clip",
        monotone && devs[3] < 0.01,
        format!("max deviation for s=1,0.5,0.1,0.01: {}", devs.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", ")),
    );
}

fn gradient_check(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for case in 0..5u64 {
        let mut r = rng::stream(303, &[case]);
        let k = 2 + (case as usize % 2);
        let horizon = r.gen_range(2.0..5.0);
        let n = r.gen_range(2..6);
        let mut times: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..horizon)).collect();
        times.sort_by(f64::total_cmp);
        let events = times.into_iter().map(|t| Event::new(t, r.gen_range(0..k))).collect();
        let seq = EventSequence::new(horizon, events);
        let link = if case % 2 == 0 { Link::synthetic() } else { Link::EluPlusOne };
        let model = Snmpp::new(ModelSpec::new(k, link), 50 + case).unwrap();
        let cfg = NllConfig::default();
        let (_, grad) = sequence_nll_grad(&model, &model.view(), &seq, &cfg, &mut rng::stream(case, &[])).unwrap();
        let h = 1e-5;
        for i in 0..model.num_params() {
            let at = |delta: f64| {
                let mut m = model.clone();
                m.store_mut().raw_mut()[i] += delta;
                sequence_nll(&m.view(), &seq, &cfg, &mut rng::stream(case, &[])).total_nll
            };
            let (fp, fm) = (at(h), at(-h));
            let fd = (fp - fm) / (2.0 * h);
            let resolution = f64::EPSILON * fp.abs().max(1.0) / (h * 1e-4);
            worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(resolution));
            coords += 1;
        }
    }
    suite.report(
        "gradient matches central differences",
        worst < 1e-4,
        format!("worst relative error {worst:.2e} over {coords} coordinates in 5 sequences"),
    );
}

fn thinning_statistics(suite: &mut Suite) {
    let p = Homogeneous {
        rates: vec![0.5],
        horizon: 50.0,
    };
    let seqs: Vec<EventSequence> = (0..1000u64).map(|i| thinning_sample(&p, &mut rng::stream(404, &[i])).unwrap()).collect();
    let mean = seqs.iter().map(|s| s.len()).sum::<usize>() as f64 / 1000.0;
    let tol = 3.0 * (25.0f64 / 1000.0).sqrt();
    let times: Vec<f64> = seqs.iter().enumerate().flat_map(|(i, s)| s.events.iter().map(move |e| i as f64 * 50.0 + e.t)).collect();
    let mut z: Vec<f64> = std::iter::once(0.0).chain(times.iter().copied()).zip(&times).map(|(a, &b)| 1.0 - (-0.5 * (b - a)).exp()).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let d = z
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).max((i + 1) as f64 / n - u))
        .fold(0.0, f64::max);
    let critical = 1.628 / n.sqrt();
    suite.report(
        "thinning statistics",
        (mean - 25.0).abs() < tol && d < critical,
        format!("mean count {mean:.3} (tol {tol:.3}); KS D {d:.4} < {critical:.4} over {} gaps", z.len()),
    );
}

fn supply_chain_invariants(suite: &mut Suite) {
    let cfg = SupplyChainConfig::default();
    let seqs = sample_many(&Generator::SupplyChain(cfg.clone()), 1500, 505, 0).unwrap();
    let mut violations = 0;
    let mut first_e2_ok = 0;
    let mut with_e2 = 0;
    let mut lags = Vec::new();
    for s in &seqs {
        let mut out_of_stock = false;
        for e in &s.events {
            match e.k {
                3 => out_of_stock = true,
                2 => out_of_stock = false,
                0 if out_of_stock => violations += 1,
                _ => {}
            }
        }
        let e1: Vec<f64> = s.events.iter().filter(|e| e.k == 0).map(|e| e.t).collect();
        let e2: Vec<f64> = s.events.iter().filter(|e| e.k == 1).map(|e| e.t).collect();
        let e3: Vec<f64> = s.events.iter().filter(|e| e.k == 2).map(|e| e.t).collect();
        if let Some(&first) = e2.first() {
            with_e2 += 1;
            if e1.len() >= 5 && e1[4] == first {
                first_e2_ok += 1;
            }
        }
        lags.extend(e2.iter().zip(&e3).map(|(a, b)| b - a));
    }
    let min_lag = lags.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_lag = lags.iter().sum::<f64>() / lags.len() as f64;
    let pass = violations == 0 && first_e2_ok == with_e2 && with_e2 > 0 && min_lag >= 0.5 && (3.8..=4.2).contains(&mean_lag);
    suite.report(
        "supply-chain invariants",
        pass,
        format!(
            "{violations} E1 while out of stock; first E2 at 5th E1 in {first_e2_ok}/{with_e2}; E3-E2 lag min {min_lag:.3}, mean {mean_lag:.3} over {}",
            lags.len()
        ),
    );
}

fn prediction_oracle(suite: &mut Suite) {
    let unit = Homogeneous {
        rates: vec![1.0],
        horizon: 1.0,
    };
    let pc = PredictConfig::default();
    let wait = expected_wait(&unit, 0.0, &[], 10.0, &pc).unwrap();
    let exact = 1.0 - (-10.0f64).exp();
    let p = Homogeneous {
        rates: vec![0.5],
        horizon: 1e9,
    };
    let mut r = rng::stream(606, &[]);
    let mut t = 0.0;
    let mut events = Vec::new();
    for _ in 0..10_000 {
        t += -(1.0 - r.gen::<f64>()).ln() / 0.5;
        events.push(Event::new(t, 0));
    }
    let seq = EventSequence::new(t + 1.0, events);
    let report = evaluate(&p, std::slice::from_ref(&seq), 2.0, &pc).unwrap();
    let pass = (wait - exact).abs() < 1e-3 && (report.time_rmse / 2.0 - 1.0).abs() < 0.03;
    suite.report(
        "prediction oracle",
        pass,
        format!("E[wait | c=1, H=10] {wait:.6} vs {exact:.6}; Exp(0.5) RMSE {:.4} over {} gaps", report.time_rmse, report.n_events),
    );
}

fn pp1_recovery(suite: &mut Suite, model: &Snmpp) {
    let v = model.view();
    let base = [model.base_intensity(0), model.base_intensity(1)];
    let d = model.delay(0, 1);
    let nulls = [model.delay(0, 0), model.delay(1, 0), model.delay(1, 1)];
    let psi = model.psi(0, 1);
    let (at, peak) = peak_influence(&v, 0, 1, 3.0);
    let pass = (base[0] - 0.5).abs() <= 0.05
        && (base[1] - 0.05).abs() <= 0.05
        && (d - 1.0).abs() <= 0.10
        && nulls.iter().all(|&x| x < 0.15)
        && psi > 0.0
        && (peak.abs() - 0.6).abs() <= 0.1;
    suite.report(
        "PP1 parameter recovery",
        pass,
        format!(
            "base ({:.4}, {:.4}); d(E1->E2) {d:.4}; null delays [{:.4}, {:.4}, {:.4}]; psi(E1,E2) {psi:.4}; |psi*phi| peak {:.4} at dt {at:.3}",
            base[0], base[1], nulls[0], nulls[1], nulls[2], peak.abs()
        ),
    );
}

fn pp2_recovery(suite: &mut Suite, model: &Snmpp) {
    let base = [model.base_intensity(0), model.base_intensity(1)];
    let pre = model.baseline(1);
    let d = model.delay(0, 1);
    let psi = model.psi(0, 1);
    let pass = (base[0] - 0.5).abs() <= 0.05 && (pre - 1.0).abs() <= 0.05 && (d - 1.0).abs() <= 0.10 && psi < 0.0;
    suite.report(
        "PP2 parameter recovery",
        pass,
        format!(
            "base ({:.4}, {:.4}), pre-link E2 constant {pre:.4}; d(E1->E2) {d:.4}; psi(E1,E2) {psi:.4}",
            base[0], base[1]
        ),
    );
}

fn supply_chain_recovery(suite: &mut Suite, model: &Snmpp) {
    let d = model.delay(1, 2);
    let signs = [model.psi(0, 1), model.psi(2, 1), model.psi(3, 0)];
    let pass = (d - 4.0).abs() <= 0.5 && signs[0] > 0.0 && signs[1] < 0.0 && signs[2] < 0.0;
    suite.report(
        "supply-chain delay recovery",
        pass,
        format!(
            "d(E2->E3) {d:.4}; psi(E1->E2) {:.4}, psi(E3->E2) {:.4}, psi(E_out->E1) {:.4}",
            signs[0], signs[1], signs[2]
        ),
    );
}

/// Noise of the epoch training loss under each integral estimator at the trained parameters.
fn estimator_variance(suite: &mut Suite, model: &Snmpp, train_set: &[EventSequence]) {
    let view = model.view();
    let subset = &train_set[..200];
    let epoch_loss = |estimator: Estimator, seed: u64| {
        let cfg = NllConfig {
            estimator,
            seed,
            ..Default::default()
        };
        per_sequence_nll(&view, subset, &cfg).iter().map(|r| r.total_nll).sum::<f64>() / subset.len() as f64
    };
    let gmce: Vec<f64> = (0..30).map(|s| epoch_loss(Estimator::GlobalGmce, 700 + s)).collect();
    let strat: Vec<f64> = (0..30).map(|s| epoch_loss(Estimator::Stratified, 700 + s)).collect();
    let (_, vg) = mean_var(&gmce);
    let (_, vs) = mean_var(&strat);
    suite.report(
        "GMCE epoch-loss variance exceeds stratified",
        vg > vs,
        format!("variance over 30 seeds on 200 PP1 sequences: GMCE {vg:.4e}, stratified Q=4 {vs:.4e}"),
    );
}

fn main() {
    let mut suite = Suite { failures: 0, total: 0 };
    let start = Instant::now();
    lemma_variance(&mut suite);
    soft_clip_convergence(&mut suite);
    gradient_check(&mut suite);
    thinning_statistics(&mut suite);
    supply_chain_invariants(&mut suite);
    prediction_oracle(&mut suite);

    let recipe = |link, epochs| Recipe {
        link,
        lr: 4e-3,
        weight_decay: 0.1,
        batch: 16,
        epochs,
        model_seed: 7,
    };
    let pp1 = generate_dataset(&Generator::Pp1, 2000, 200, 1).unwrap();
    let pp1_test = sample_many(&Generator::Pp1, 100, 2, 2).unwrap();
    let m1 = fit("pp1", &pp1, 2, &recipe(Link::synthetic(), 14));
    pp1_recovery(&mut suite, &m1);
    beats_constant(&mut suite, "PP1", &m1, &pp1, &pp1_test);
    estimator_variance(&mut suite, &m1, &pp1.train);

    let pp2 = generate_dataset(&Generator::Pp2, 2000, 200, 1).unwrap();
    let pp2_test = sample_many(&Generator::Pp2, 100, 2, 2).unwrap();
    let m2 = fit("pp2", &pp2, 2, &recipe(Link::synthetic(), 14));
    pp2_recovery(&mut suite, &m2);
    beats_constant(&mut suite, "PP2", &m2, &pp2, &pp2_test);

    let sc_gen = Generator::SupplyChain(SupplyChainConfig::default());
    let sc = generate_dataset(&sc_gen, 1500, 150, 1).unwrap();
    let sc_test = sample_many(&sc_gen, 60, 2, 2).unwrap();
    let m3 = fit("supply-chain", &sc, 4, &recipe(Link::EluPlusOne, 10));
    supply_chain_recovery(&mut suite, &m3);
    beats_constant(&mut suite, "supply chain", &m3, &sc, &sc_test);

    println!(
        "{} of {} criteria passed in {:.0}s",
        suite.total - suite.failures,
        suite.total,
        start.elapsed().as_secs_f64()
    );
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
