//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.
//!
//! Run with `cargo test -p min2net-cli --test acceptance`.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use min2net::dataio::{
    augment_jitter, augment_magwarp, augment_permute, augment_scale, augment_timewarp, synth_generate, EpochedDataset,
    SynthSpec,
};
use min2net::harness::{plan_folds, run_experiment, ExperimentConfig, ExperimentResult, Scheme, StopReason, TrainConfig};
use min2net::model::{
    cross_entropy_loss, mine_triplets, mse_loss, triplet_semihard_loss, LatentBatch, Min2Net, Min2NetConfig,
};
use min2net::nncore::{
    avg_pool_time, avg_pool_time_backward, batch_norm, batch_norm_backward, conv_time, conv_time_backward,
    conv_transpose_time, conv_transpose_time_backward, elu, elu_backward, fully_connected, fully_connected_backward,
    grad_check, grad_check_at, softmax, softmax_backward, BnState, Mode, TensorBuf,
};
use min2net::preproc::{butter_bandpass, filtfilt, FilterSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn(&mut Shared) -> Outcome,
}

/// The six-subject independent run feeds both the protocol and the LOSO learning checks.
#[derive(Default)]
struct Shared {
    loso: Option<(EpochedDataset, ExperimentConfig, TrainConfig, ExperimentResult, Duration)>,
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn main() {
    let criteria = [
        Criterion {
            name: "parameter counts",
            budget: Duration::from_secs(1),
            run: parameter_counts,
        },
        Criterion {
            name: "shape trace",
            budget: Duration::from_secs(1),
            run: shape_trace,
        },
        Criterion {
            name: "gradient suite",
            budget: Duration::from_secs(120),
            run: gradient_suite,
        },
        Criterion {
            name: "triplet oracle",
            budget: Duration::from_secs(60),
            run: triplet_oracle,
        },
        Criterion {
            name: "filter properties",
            budget: Duration::from_secs(10),
            run: filter_properties,
        },
        Criterion {
            name: "protocol properties",
            budget: Duration::from_secs(15 * 60),
            run: protocol_properties,
        },
        Criterion {
            name: "learning sanity",
            budget: Duration::from_secs(30 * 60),
            run: learning_sanity,
        },
        Criterion {
            name: "augmentation invariants",
            budget: Duration::from_secs(60),
            run: augmentation_invariants,
        },
        Criterion {
            name: "determinism",
            budget: Duration::from_secs(30 * 60),
            run: determinism,
        },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (c.run)(&mut shared)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let took = t0.elapsed();
        let out = match out {
            Ok(d) if took > c.budget => Err(format!("{d}; over budget {:.0?}", c.budget)),
            o => o,
        };
        match out {
            Ok(d) => println!("PASS  {:<24} {:>8.1}s  {d}", c.name, took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL  {:<24} {:>8.1}s  {d}", c.name, took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn parameter_counts(_: &mut Shared) -> Outcome {
    let mut seen = Vec::new();
    for (c, want) in [(20, 55_232), (15, 38_297)] {
        let mut cfg = Min2NetConfig::new(c, 400, 2);
        cfg.latent = c;
        let got = Min2Net::<f32>::build(&cfg, 0).map_err(|e| e.to_string())?.trainable_count();
        ensure(got == want, format!("C={c}: {got} trainable, expected {want}"))?;
        seen.push(format!("C={c}: {got}"));
    }
    Ok(seen.join(", "))
}

fn shape_trace(_: &mut Shared) -> Outcome {
    let c = 20;
    let net = Min2Net::<f32>::build(&Min2NetConfig::new(c, 400, 2), 0).map_err(|e| e.to_string())?;
    let got = net.shape_trace(1).map_err(|e| e.to_string())?;
    let want: Vec<(&str, Vec<usize>)> = vec![
        ("input", vec![1, 400, c]),
        ("conv1", vec![1, 400, c]),
        ("bn1", vec![1, 400, c]),
        ("pool1", vec![1, 100, c]),
        ("conv2", vec![1, 100, 10]),
        ("bn2", vec![1, 100, 10]),
        ("pool2", vec![1, 25, 10]),
        ("flatten", vec![250]),
        ("latent", vec![c]),
        ("decoder_fc", vec![250]),
        ("reshape", vec![1, 25, 10]),
        ("deconv1", vec![1, 100, 10]),
        ("deconv2", vec![1, 400, c]),
        ("classifier", vec![2]),
    ];
    ensure(got == want, format!("got {got:?}"))?;
    Ok(format!("{} layers", want.len()))
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> TensorBuf<f64> {
    TensorBuf::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &TensorBuf<f64>, b: &TensorBuf<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

const GRAD_TOL: f64 = 1e-4;

struct GradLog {
    worst: f64,
    checks: usize,
}

impl GradLog {
    fn record(&mut self, what: &str, r: min2net::Result<min2net::nncore::GradCheckReport>) -> Result<(), String> {
        let r = r.map_err(|e| format!("{what}: {e}"))?;
        self.checks += 1;
        self.worst = self.worst.max(r.max_rel_error);
        ensure(r.passes(GRAD_TOL), format!("{what}: max relative error {:.2e}", r.max_rel_error))
    }
}

fn gradient_suite(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut log = GradLog { worst: 0.0, checks: 0 };

    // conv_time, including even kernels and strides
    for (t, k, s) in [(16, 5, 1), (16, 4, 1), (16, 4, 2), (16, 8, 4)] {
        let x = rand_tensor(&mut rng, &[2, 1, t, 3]);
        let w = rand_tensor(&mut rng, &[1, k, 3, 2]);
        let b = rand_tensor(&mut rng, &[2]);
        let g = rand_tensor(&mut rng, &[2, 1, t / s, 2]);
        let an = conv_time_backward(&x, &w, s, &g).map_err(|e| e.to_string())?;
        let what = format!("conv_time k={k} s={s}");
        log.record(&format!("{what} input"), grad_check(|v| dot(&conv_time(v, &w, &b, s).unwrap(), &g), &x, &an.input))?;
        log.record(&format!("{what} weights"), grad_check(|v| dot(&conv_time(&x, v, &b, s).unwrap(), &g), &w, &an.weights))?;
        log.record(&format!("{what} bias"), grad_check(|v| dot(&conv_time(&x, &w, v, s).unwrap(), &g), &b, &an.bias))?;
    }

    for (l, k, s) in [(4, 4, 4), (6, 5, 2), (8, 3, 1)] {
        let x = rand_tensor(&mut rng, &[2, 1, l, 3]);
        let w = rand_tensor(&mut rng, &[1, k, 2, 3]);
        let b = rand_tensor(&mut rng, &[2]);
        let g = rand_tensor(&mut rng, &[2, 1, l * s, 2]);
        let an = conv_transpose_time_backward(&x, &w, s, &g).map_err(|e| e.to_string())?;
        let f = |x: &TensorBuf<f64>, w: &TensorBuf<f64>, b: &TensorBuf<f64>| dot(&conv_transpose_time(x, w, b, s).unwrap(), &g);
        let what = format!("conv_transpose_time k={k} s={s}");
        log.record(&format!("{what} input"), grad_check(|v| f(v, &w, &b), &x, &an.input))?;
        log.record(&format!("{what} weights"), grad_check(|v| f(&x, v, &b), &w, &an.weights))?;
        log.record(&format!("{what} bias"), grad_check(|v| f(&x, &w, v), &b, &an.bias))?;
    }

    {
        let x = rand_tensor(&mut rng, &[3, 1, 5, 4]);
        let gamma = TensorBuf::from_fn(&[4], |_| rng.random_range(0.5..1.5));
        let beta = rand_tensor(&mut rng, &[4]);
        let g = rand_tensor(&mut rng, &[3, 1, 5, 4]);
        let bn = |x: &TensorBuf<f64>, gm: &TensorBuf<f64>, bt: &TensorBuf<f64>| {
            let mut st = BnState::new(4);
            batch_norm(x, gm, bt, Mode::Train, &mut st).unwrap()
        };
        let (_, cache) = bn(&x, &gamma, &beta);
        let (dx, dg, db) = batch_norm_backward(&cache, &gamma, &g).map_err(|e| e.to_string())?;
        log.record("batch_norm input", grad_check(|v| dot(&bn(v, &gamma, &beta).0, &g), &x, &dx))?;
        log.record("batch_norm gamma", grad_check(|v| dot(&bn(&x, v, &beta).0, &g), &gamma, &dg))?;
        log.record("batch_norm beta", grad_check(|v| dot(&bn(&x, &gamma, v).0, &g), &beta, &db))?;
    }

    {
        let x = rand_tensor(&mut rng, &[2, 1, 12, 3]);
        let g = rand_tensor(&mut rng, &[2, 1, 3, 3]);
        let dx = avg_pool_time_backward(&g, 4).map_err(|e| e.to_string())?;
        log.record("avg_pool_time", grad_check(|v| dot(&avg_pool_time(v, 4).unwrap(), &g), &x, &dx))?;
    }

    {
        let x = rand_tensor(&mut rng, &[3, 5]);
        let w = rand_tensor(&mut rng, &[5, 4]);
        let b = rand_tensor(&mut rng, &[4]);
        let g = rand_tensor(&mut rng, &[3, 4]);
        let (dx, dw, db) = fully_connected_backward(&x, &w, &g).map_err(|e| e.to_string())?;
        let f = |x: &TensorBuf<f64>, w: &TensorBuf<f64>, b: &TensorBuf<f64>| dot(&fully_connected(x, w, b).unwrap(), &g);
        log.record("fully_connected input", grad_check(|v| f(v, &w, &b), &x, &dx))?;
        log.record("fully_connected weights", grad_check(|v| f(&x, v, &b), &w, &dw))?;
        log.record("fully_connected bias", grad_check(|v| f(&x, &w, v), &b, &db))?;
    }

    {
        // keep away from the kink at zero
        let x = TensorBuf::from_fn(&[4, 6], |i| {
            let m: f64 = rng.random_range(0.05..2.0);
            if i % 2 == 0 {
                m
            } else {
                -m
            }
        });
        let g = rand_tensor(&mut rng, &[4, 6]);
        let dx = elu_backward(&elu(&x), &g).map_err(|e| e.to_string())?;
        log.record("elu", grad_check(|v| dot(&elu(v), &g), &x, &dx))?;
    }

    {
        let x = TensorBuf::from_fn(&[3, 4], |_| rng.random_range(-3.0..3.0));
        let g = rand_tensor(&mut rng, &[3, 4]);
        let dx = softmax_backward(&softmax(&x).unwrap(), &g).map_err(|e| e.to_string())?;
        log.record("softmax", grad_check(|v| dot(&softmax(v).unwrap(), &g), &x, &dx))?;
    }

    for elementwise in [false, true] {
        let x = rand_tensor(&mut rng, &[2, 1, 8, 3]);
        let r = rand_tensor(&mut rng, &[2, 1, 8, 3]);
        let an = mse_loss(&x, &r, elementwise).map_err(|e| e.to_string())?;
        log.record(
            &format!("mse elementwise={elementwise}"),
            grad_check(|v| mse_loss(&x, v, elementwise).unwrap().value, &r, &an.grad),
        )?;
    }

    {
        let labels = vec![0, 2, 1, 2];
        let p = softmax(&rand_tensor(&mut rng, &[4, 3])).unwrap();
        let an = cross_entropy_loss(&labels, &p).map_err(|e| e.to_string())?;
        log.record("cross_entropy", grad_check(|v| cross_entropy_loss(&labels, v).unwrap().value, &p, &an.grad))?;
    }

    {
        let labels = vec![0, 1, 0, 1, 0, 1, 1, 0];
        let z = rand_tensor(&mut rng, &[8, 3]);
        let batch = LatentBatch::new(z.clone(), labels.clone()).unwrap();
        let an = triplet_semihard_loss(&batch, 1.0).map_err(|e| e.to_string())?;
        ensure(an.value > 0.0, "triplet check needs an active hinge")?;
        log.record(
            "triplet_semihard",
            grad_check(
                |v| triplet_semihard_loss(&LatentBatch::new(v.clone(), labels.clone()).unwrap(), 1.0).unwrap().value,
                &z,
                &an.grad,
            ),
        )?;
    }

    // the full weighted objective through every layer
    let cfg = Min2NetConfig::new(4, 400, 2);
    let net = Min2Net::<f64>::build(&cfg, 7).map_err(|e| e.to_string())?;
    let x = rand_tensor(&mut rng, &[6, 1, 400, 4]).map(|v| 2.0 * v);
    let labels = vec![0, 1, 0, 1, 0, 1];
    let trace = net.forward_frozen(&x, Mode::Train).map_err(|e| e.to_string())?;
    let latents = LatentBatch::new(trace.encoder.latent.clone(), labels.clone()).unwrap();
    let triplets = mine_triplets(&latents).map_err(|e| e.to_string())?;
    let (_, head) = net.losses(&trace, &labels, Some(&triplets)).map_err(|e| e.to_string())?;
    let mut graded = net.clone();
    graded.zero_grad();
    graded.backward(&trace, &head).map_err(|e| e.to_string())?;
    let mut tensors = 0;
    for (i, p) in graded.params().iter().enumerate() {
        let n = p.numel();
        let idx: Vec<usize> = if n <= 24 { (0..n).collect() } else { (0..24).map(|_| rng.random_range(0..n)).collect() };
        let r = grad_check_at(
            |v| {
                let mut m = net.clone();
                m.params_mut()[i].value_mut().copy_from_slice(v.data());
                let tr = m.forward_frozen(&x, Mode::Train).unwrap();
                m.losses(&tr, &labels, Some(&triplets)).unwrap().0.total(&cfg)
            },
            net.params()[i].value(),
            p.grad(),
            &idx,
        );
        log.record(&format!("end-to-end {}", p.name), r)?;
        tensors += 1;
    }
    Ok(format!(
        "{} checks (7 kernels, 3 losses, {tensors} parameter tensors end to end), worst {:.1e} ≤ {GRAD_TOL:.0e}",
        log.checks, log.worst
    ))
}

/// Enumerates every (a, p, n), then applies the semi-hard rule to each anchor-positive pair.
fn brute_force_triplet(z: &[Vec<f64>], y: &[usize], margin: f64) -> (Vec<(usize, usize, usize)>, f64) {
    let d = |i: usize, j: usize| z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut chosen = Vec::new();
    for a in 0..z.len() {
        for p in 0..z.len() {
            if a == p || y[a] != y[p] {
                continue;
            }
            let dap = d(a, p);
            let mut negs: Vec<(f64, usize)> = (0..z.len()).filter(|&n| y[n] != y[a]).map(|n| (d(a, n), n)).collect();
            negs.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.1.cmp(&v.1)));
            let n = match negs.iter().find(|c| c.0 > dap) {
                Some(c) => c.1,
                None => {
                    let far = negs.last().unwrap().0;
                    negs.iter().find(|c| c.0 == far).unwrap().1
                }
            };
            chosen.push((a, p, n));
        }
    }
    let loss = chosen.iter().map(|&(a, p, n)| 0.5 * (d(a, p) - d(a, n) + margin).max(0.0)).sum::<f64>() / chosen.len() as f64;
    (chosen, loss)
}

fn triplet_oracle(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 200 {
        let b = rng.random_range(4..=32);
        let classes = rng.random_range(2..=3);
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..classes)).collect();
        if min2net::model::check_triplet_composition(&y).is_err() {
            continue;
        }
        let w = rng.random_range(2..=8);
        let z: Vec<Vec<f64>> = (0..b).map(|_| (0..w).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let margin = [0.2, 1.0][done % 2];
        let (want, want_loss) = brute_force_triplet(&z, &y, margin);
        let batch = LatentBatch::new(TensorBuf::from_vec(&[b, w], z.concat()).unwrap(), y).unwrap();
        let got: Vec<_> = mine_triplets(&batch)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|t| (t.anchor, t.positive, t.negative))
            .collect();
        ensure(got == want, format!("batch {done}: mined triplets differ"))?;
        let loss = triplet_semihard_loss(&batch, margin).map_err(|e| e.to_string())?.value;
        worst = worst.max((loss - want_loss).abs());
        ensure(worst <= 1e-6, format!("batch {done}: {loss} vs {want_loss}"))?;
        done += 1;
    }
    Ok(format!("200 batches, worst |Δ| {worst:.1e}"))
}

// scipy.signal.butter(5, [8, 30], btype="band", fs=100)
const REF_B: [f64; 11] = [
    0.0319480590565071,
    0.0,
    -0.1597402952825355,
    0.0,
    0.319480590565071,
    0.0,
    -0.319480590565071,
    0.0,
    0.1597402952825355,
    0.0,
    -0.0319480590565071,
];
const REF_A: [f64; 11] = [
    1.0,
    -2.671110255765672,
    3.5853791911610666,
    -3.5985844840952006,
    3.272186567531481,
    -2.374931558245808,
    1.2805589732996312,
    -0.5517633347849256,
    0.20450493018174795,
    -0.0495277937477105,
    0.00577771014768367,
];

fn filter_properties(_: &mut Shared) -> Outcome {
    let f = butter_bandpass(&FilterSpec::new(5, 8.0, 30.0, 100.0)).map_err(|e| e.to_string())?;
    ensure(f.is_stable(), "unstable poles")?;
    let (lo, hi) = (f.magnitude_db(8.0), f.magnitude_db(30.0));
    for (edge, db) in [(8, lo), (30, hi)] {
        ensure((db + 3.0103).abs() <= 0.1, format!("{db:.3} dB at {edge} Hz"))?;
    }
    let (b, a) = f.transfer_function();
    let coef_err = b
        .iter()
        .zip(REF_B)
        .chain(a.iter().zip(REF_A))
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    ensure(b.len() == 11 && coef_err <= 1e-8, format!("coefficients off by {coef_err:.1e}"))?;

    let x: Vec<f64> = (0..1000).map(|n| (2.0 * PI * 19.0 * n as f64 / 100.0).sin()).collect();
    let y = filtfilt(&f, &x).map_err(|e| e.to_string())?;
    let mid = 200..800;
    let peak = y[mid.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure((peak - 1.0).abs() <= 0.01, format!("19 Hz amplitude {peak:.4}"))?;
    let xcorr = |lag: i64| -> f64 { mid.clone().map(|n| x[n] * y[(n as i64 + lag) as usize]).sum() };
    let lag = (-10..=10).max_by(|&p, &q| xcorr(p).total_cmp(&xcorr(q))).unwrap();
    ensure(lag == 0, format!("lag {lag} samples"))?;
    Ok(format!(
        "edges {lo:.3}/{hi:.3} dB, coefficients within {coef_err:.1e}, 19 Hz gain {peak:.4} lag 0"
    ))
}

const LOSO_EPOCHS: usize = 40;

fn loso_run(shared: &mut Shared) -> Result<&(EpochedDataset, ExperimentConfig, TrainConfig, ExperimentResult, Duration), String> {
    if shared.loso.is_none() {
        let mut spec = SynthSpec::new(6, 10, 8, 400, 100.0);
        spec.seed = 1;
        spec.noise = 0.3;
        let ds = synth_generate(&spec).map_err(|e| e.to_string())?;
        let mut mc = Min2NetConfig::new(8, 400, 2);
        mc.mse_elementwise = true;
        let tc = TrainConfig {
            max_epochs: LOSO_EPOCHS,
            ..TrainConfig::default()
        };
        let ec = ExperimentConfig::new(Scheme::Independent, 7);
        let t0 = Instant::now();
        let r = run_experiment(&ds, &mc, &tc, &ec, None).map_err(|e| e.to_string())?;
        shared.loso = Some((ds, ec, tc, r, t0.elapsed()));
    }
    Ok(shared.loso.as_ref().unwrap())
}

/// Replays reduce-on-plateau and early stopping from the logged validation losses.
fn replay(val: &[f64], tc: &TrainConfig) -> (Vec<f64>, Option<usize>) {
    let (mut best, mut plateau, mut stale, mut lr) = (f64::INFINITY, 0, 0, tc.lr_start);
    let mut lrs = Vec::new();
    for (i, &v) in val.iter().enumerate() {
        lrs.push(lr);
        if v < best {
            best = v;
            plateau = 0;
            stale = 0;
        } else {
            plateau += 1;
            stale += 1;
            if plateau == tc.plateau_patience {
                lr = (lr * tc.lr_decay_factor).max(tc.lr_floor);
                plateau = 0;
            }
            if stale == tc.earlystop_patience {
                return (lrs, Some(i + 1));
            }
        }
    }
    (lrs, None)
}

fn protocol_properties(shared: &mut Shared) -> Outcome {
    let (ds, ec, tc, r, took) = loso_run(shared)?;
    ensure(r.rows.len() == 30, format!("{} fold rows", r.rows.len()))?;
    ensure(r.failures() == 0, format!("{} folds failed", r.failures()))?;

    for (split, folds) in plan_folds(ds, ec).map_err(|e| e.to_string())? {
        let s = split.subject;
        let subj = |i: &usize| ds.subject_ids()[*i];
        ensure(split.test.iter().all(|i| subj(i) == s), format!("subject {s}: foreign trial in test set"))?;
        ensure(split.train.iter().all(|i| subj(i) != s), format!("subject {s}: test subject in training pool"))?;
        for (tr, va) in &folds {
            ensure(
                tr.iter().chain(va).all(|i| subj(i) != s) && !tr.iter().any(|i| va.contains(i)),
                format!("subject {s}: leaking inner fold"),
            )?;
        }
        let rows = r.rows.iter().filter(|row| row.subject == s).count();
        ensure(rows == 5, format!("subject {s}: {rows} rows"))?;
    }

    let (mut reductions, mut early) = (0, 0);
    for (row, h) in r.rows.iter().zip(&r.histories) {
        let at = format!("subject {} fold {}", row.subject, row.fold);
        let lrs = h.learning_rates();
        for &lr in &lrs {
            let on_ladder = (0..16).any(|m| (lr - 1e-3 * 0.5f64.powi(m)).abs() <= 1e-15) || lr == 1e-4;
            ensure(on_ladder && lr >= 1e-4, format!("{at}: lr {lr} off the 1e-3·0.5^m ladder"))?;
        }
        reductions += lrs.windows(2).filter(|w| w[1] < w[0]).count();
        let val: Vec<f64> = h.epochs.iter().map(|e| e.val.total).collect();
        let (want_lrs, want_stop) = replay(&val, tc);
        ensure(lrs == want_lrs, format!("{at}: lr trace {lrs:?} vs replay {want_lrs:?}"))?;
        let best = 1 + val.iter().enumerate().fold(0, |b, (i, &v)| if v < val[b] { i } else { b });
        ensure(row.best_epoch == best, format!("{at}: best epoch {} vs {best}", row.best_epoch))?;
        match row.stop {
            Some(StopReason::EarlyStop) => {
                early += 1;
                ensure(
                    want_stop == Some(row.epochs_run) && row.epochs_run - row.best_epoch == 20,
                    format!("{at}: stopped at {} with best {}", row.epochs_run, row.best_epoch),
                )?;
            }
            Some(StopReason::MaxEpochs) => ensure(
                want_stop.is_none() && row.epochs_run == LOSO_EPOCHS,
                format!("{at}: ran {} epochs, replay stops at {want_stop:?}", row.epochs_run),
            )?,
            ref other => return Err(format!("{at}: stop {other:?}")),
        }
    }
    ensure(reductions > 0 && early > 0, format!("{reductions} reductions, {early} early stops: rule not exercised"))?;
    Ok(format!(
        "30 rows, no leakage, {reductions} LR reductions and {early} early stops match the replay (run {:.0}s)",
        took.as_secs_f64()
    ))
}

fn learning_sanity(shared: &mut Shared) -> Outcome {
    let mut spec = SynthSpec::new(1, 50, 8, 400, 100.0);
    spec.seed = 3;
    spec.contrast = 0.8;
    spec.noise = 0.3;
    let ds = synth_generate(&spec).map_err(|e| e.to_string())?;
    ensure(ds.len() == 200, format!("{} trials", ds.len()))?;
    let mut mc = Min2NetConfig::new(8, 400, 2);
    mc.mse_elementwise = true;
    let tc = TrainConfig {
        max_epochs: 100,
        ..TrainConfig::default()
    };
    let dep = run_experiment(&ds, &mc, &tc, &ExperimentConfig::new(Scheme::Dependent, 5), None).map_err(|e| e.to_string())?;
    let dep_acc = dep.over_folds.accuracy_mean;

    let (_, _, _, loso, _) = loso_run(shared)?;
    let loso_acc = loso.over_folds.accuracy_mean;
    let detail = format!(
        "dependent {:.1}% (need ≥ 90), LOSO {:.1}% ± {:.1} (need ≥ 65)",
        100.0 * dep_acc,
        100.0 * loso_acc,
        100.0 * loso.over_folds.accuracy_sd
    );
    ensure(dep_acc >= 0.90 && loso_acc >= 0.65, detail.clone())?;
    Ok(detail)
}

fn augmentation_invariants(_: &mut Shared) -> Outcome {
    let mut spec = SynthSpec::new(2, 6, 4, 200, 100.0);
    spec.seed = 8;
    let ds = synth_generate(&spec).map_err(|e| e.to_string())?;
    let e = |r: min2net::Result<EpochedDataset>| r.map_err(|e| e.to_string());
    let outputs = [
        ("jitter", e(augment_jitter(&ds, 0.1, 1))?),
        ("scale", e(augment_scale(&ds, 0.1, 1))?),
        ("magwarp", e(augment_magwarp(&ds, 0.2, 4, 1))?),
        ("timewarp", e(augment_timewarp(&ds, 0.2, 4, 1))?),
        ("permute", e(augment_permute(&ds, 4, 1))?),
    ];
    for (name, out) in &outputs {
        let same_meta = out.len() == ds.len()
            && out.n_channels() == ds.n_channels()
            && out.n_samples() == ds.n_samples()
            && out.labels() == ds.labels()
            && out.subject_ids() == ds.subject_ids()
            && out.session_tags() == ds.session_tags();
        ensure(same_meta, format!("{name} changed dims or labels"))?;
        ensure(out.data() != ds.data(), format!("{name} left the data untouched"))?;
    }
    ensure(e(augment_jitter(&ds, 0.0, 2))? == ds, "jitter σ=0 is not the identity")?;
    ensure(e(augment_scale(&ds, 0.0, 2))? == ds, "scale σ=0 is not the identity")?;
    ensure(e(augment_magwarp(&ds, 0.0, 4, 2))? == ds, "magwarp σ=0 is not the identity")?;
    ensure(e(augment_timewarp(&ds, 0.0, 4, 2))? == ds, "timewarp σ=0 is not the identity")?;
    let t = ds.n_samples();
    for seed in 0..20 {
        let p = e(augment_permute(&ds, 5, seed))?;
        for (a, b) in ds.data().chunks(t).zip(p.data().chunks(t)) {
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_by(f32::total_cmp);
            b.sort_by(f32::total_cmp);
            ensure(a == b, "permute changed a channel's sample multiset")?;
        }
    }
    Ok("5 transforms keep dims and labels, σ=0 identities hold, permutation keeps multisets".into())
}

fn cli_run(data: &Path, out: &Path, config: &Path) -> Result<Duration, String> {
    let args = min2net_cli::RunArgs {
        data: Some(data.to_path_buf()),
        scheme: Some(Scheme::Independent),
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        augment: None,
        jobs: Some(1),
        test_session: None,
        seed: Some(2024),
    };
    let t0 = Instant::now();
    min2net_cli::cmd_run(&args).map_err(|e| e.to_string())?;
    Ok(t0.elapsed())
}

fn determinism(_: &mut Shared) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("ds");
    let mut spec = SynthSpec::new(4, 10, 8, 400, 100.0);
    spec.seed = 5;
    spec.noise = 0.3;
    let ds = synth_generate(&spec).map_err(|e| e.to_string())?;
    min2net::dataio::write_dataset(&ds, &data, "smoke").map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "[model]\nmse_elementwise = true\n[train]\nmax_epochs = 15\n").map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ta = cli_run(&data, &a, &config)?;
    let tb = cli_run(&data, &b, &config)?;
    let read = |d: &Path| std::fs::read(d.join("results.csv")).map_err(|e| e.to_string());
    let (ra, rb) = (read(&a)?, read(&b)?);
    ensure(ra == rb, "results.csv differs between identical runs")?;
    let rows = ra.iter().filter(|&&c| c == b'\n').count() - 1;
    Ok(format!(
        "results.csv byte-identical ({rows} rows, {} bytes); runs took {:.1}s and {:.1}s",
        ra.len(),
        ta.as_secs_f64(),
        tb.as_secs_f64()
    ))
}
