//! Self-check suites: central finite-difference gradient verification for
//! every differentiable op (plus a whole CueCAn unit), and oracle
//! comparisons of the production kernels against the brute-force references.
//! Both the integration tests and the CLI `selftest` command run these.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cuecan::{build_mask, init_masked_weight, unit_forward, CueCanWires, FillVariant, Orientation, UnitSpec};
use crate::error::CoreResult;
use crate::kernels;
use crate::reference;
use crate::rng::{index, stream, uniform, Domain, Rng};
use crate::tape::{Tape, VarId};
use crate::tensor::{Dims4, TapMask, Tensor4};

/// FD step per the contract: central differences with h = 1e-5 in f64.
pub const FD_STEP: f64 = 1e-5;
/// Maximum allowed relative error against finite differences.
pub const FD_TOL: f64 = 1e-4;
/// Maximum allowed |production - reference| in the oracle suite.
pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: &'static str,
    pub trials: usize,
    /// Worst observed error: max relative error for gradient cases, max
    /// absolute difference (or mismatch count) for oracle cases.
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }

    pub fn lines(&self) -> Vec<String> {
        self.cases
            .iter()
            .map(|c| {
                format!(
                    "{} {:<22} trials={:<4} worst={:.3e} tol={:.0e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.trials,
                    c.worst,
                    c.tol
                )
            })
            .collect()
    }
}

type CaseRun<'a> = Box<dyn FnMut(&[Tensor4], bool) -> CoreResult<(f64, Option<Vec<Tensor4>>)> + 'a>;

/// Central-difference check of one recorded case. `run` must rebuild the
/// graph from the given parameter values; with `want_grads` it also runs
/// backward and returns gradients in parameter order.
pub fn fd_case(run: &mut CaseRun, params: &mut [Tensor4], h: f64) -> CoreResult<f64> {
    let (_, grads) = run(params, true)?;
    let grads = grads.expect("backward requested");
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for i in 0..params[pi].dims().numel() {
            let orig = params[pi].data()[i];
            params[pi].data_mut()[i] = orig + h;
            let (fp, _) = run(params, false)?;
            params[pi].data_mut()[i] = orig - h;
            let (fm, _) = run(params, false)?;
            params[pi].data_mut()[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let a = grads[pi].data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn rand_t(rng: &mut Rng, dims: Dims4, lo: f64, hi: f64) -> Tensor4 {
    Tensor4::from_fn(dims, |_| uniform(rng, lo, hi))
}

/// Values away from relu's kink so finite differences stay two-sided.
fn rand_t_off_zero(rng: &mut Rng, dims: Dims4) -> Tensor4 {
    Tensor4::from_fn(dims, |_| {
        let v = uniform(rng, 0.05, 1.0);
        if uniform(rng, 0.0, 1.0) < 0.5 {
            -v
        } else {
            v
        }
    })
}

/// Shuffled multiples of 0.05: all pairwise gaps far exceed the FD step,
/// so max-pool argmaxes cannot flip under perturbation.
fn rand_t_separated(rng: &mut Rng, dims: Dims4) -> Tensor4 {
    let n = dims.numel();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
    crate::rng::shuffle(rng, &mut vals);
    let mut it = vals.into_iter();
    Tensor4::from_fn(dims, |_| it.next().expect("length matches"))
}

/// loss = sum(out * probe): dense, direction-rich scalar reduction.
fn probe_loss(tape: &mut Tape, out: VarId, probe: &Tensor4) -> CoreResult<VarId> {
    let p = tape.leaf(probe.clone());
    let m = tape.mul(out, p)?;
    tape.sum_all(m)
}

fn grads_for(
    tape: &mut Tape,
    loss: VarId,
    vars: &[VarId],
    shapes: &[Dims4],
) -> CoreResult<Vec<Tensor4>> {
    let mut g = tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(shapes)
        .map(|(&v, &d)| g.take(v).unwrap_or_else(|| Tensor4::zeros(d)))
        .collect())
}

struct GradCase {
    name: &'static str,
    worst: f64,
}

impl GradCase {
    fn run(
        name: &'static str,
        trials: usize,
        rng: &mut Rng,
        mut make: impl FnMut(&mut Rng) -> (Vec<Tensor4>, CaseRun<'static>),
    ) -> CoreResult<GradCase> {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (mut params, mut run) = make(rng);
            let w = fd_case(&mut run, &mut params, FD_STEP)?;
            if w > worst {
                worst = w;
            }
        }
        Ok(GradCase { name, worst })
    }
}

fn random_mask(rng: &mut Rng, k: usize) -> TapMask {
    let variant = if index(rng, 2) == 0 { FillVariant::Center } else { FillVariant::Edge };
    let orientation =
        if index(rng, 2) == 0 { Orientation::RowFill } else { Orientation::ColumnFill };
    build_mask(k, variant, orientation).expect("valid k")
}

/// Gradient suite: each differentiable op FD-checked on `trials` random
/// instances, plus a full CueCAn unit on (1,8,8,2).
pub fn run_gradient_suite(seed: u64, trials: usize) -> CoreResult<SuiteReport> {
    let mut cases: Vec<GradCase> = Vec::new();
    let mut case_idx = 0u64;
    let mut next_rng = || {
        case_idx += 1;
        stream(seed, Domain::Check, case_idx)
    };

    // conv2d, plain and masked
    for (name, masked) in [("conv2d", false), ("conv2d_masked", true)] {
        let mut rng = next_rng();
        cases.push(GradCase::run(name, trials, &mut rng, |rng| {
            let (b, h, w) = (1 + index(rng, 2), 3 + index(rng, 3), 3 + index(rng, 3));
            let (cin, cout) = (1 + index(rng, 2), 1 + index(rng, 2));
            let k = if masked { [3, 5][index(rng, 2)] } else { [1, 3][index(rng, 2)] };
            let mask = if masked { Some(random_mask(rng, k)) } else { None };
            let x = rand_t(rng, Dims4::new(b, h, w, cin), -1.0, 1.0);
            let wt = rand_t(rng, Dims4::new(k, k, cin, cout), -0.7, 0.7);
            let bs = rand_t(rng, Dims4::new(1, 1, 1, cout), -0.3, 0.3);
            let probe = rand_t(rng, Dims4::new(b, h, w, cout), -1.0, 1.0);
            let shapes = [x.dims(), wt.dims(), bs.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let wv = t.leaf(params[1].clone());
                let bv = t.leaf(params[2].clone());
                let out = t.conv2d(xv, wv, bv, mask.clone())?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g = if want {
                    Some(grads_for(&mut t, loss, &[xv, wv, bv], &shapes)?)
                } else {
                    None
                };
                Ok((val, g))
            });
            (vec![x, wt, bs], run)
        })?);
    }

    // transposed conv
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("convt2d", trials, &mut rng, |rng| {
            let (h, w) = (2 + index(rng, 2), 2 + index(rng, 2));
            let (cin, cout) = (1 + index(rng, 2), 1 + index(rng, 2));
            let x = rand_t(rng, Dims4::new(1, h, w, cin), -1.0, 1.0);
            let wt = rand_t(rng, Dims4::new(4, 4, cin, cout), -0.5, 0.5);
            let bs = rand_t(rng, Dims4::new(1, 1, 1, cout), -0.3, 0.3);
            let probe = rand_t(rng, Dims4::new(1, h * 2, w * 2, cout), -1.0, 1.0);
            let shapes = [x.dims(), wt.dims(), bs.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let wv = t.leaf(params[1].clone());
                let bv = t.leaf(params[2].clone());
                let out = t.convt2d(xv, wv, bv)?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g =
                    if want { Some(grads_for(&mut t, loss, &[xv, wv, bv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x, wt, bs], run)
        })?);
    }

    // max pool (tie-free inputs)
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("maxpool2", trials, &mut rng, |rng| {
            let (h, w, c) = (4 + 2 * index(rng, 2), 4 + 2 * index(rng, 2), 1 + index(rng, 2));
            let x = rand_t_separated(rng, Dims4::new(1, h, w, c));
            let probe = rand_t(rng, Dims4::new(1, h / 2, w / 2, c), -1.0, 1.0);
            let shapes = [x.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let out = t.maxpool2(xv)?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[xv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x], run)
        })?);
    }

    // adaptive average pool
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("adaptive_avg_pool", trials, &mut rng, |rng| {
            let (h, w, c) = (3 + index(rng, 5), 3 + index(rng, 5), 1 + index(rng, 2));
            let (oh, ow) = (1 + index(rng, h), 1 + index(rng, w));
            let x = rand_t(rng, Dims4::new(1, h, w, c), -1.0, 1.0);
            let probe = rand_t(rng, Dims4::new(1, oh, ow, c), -1.0, 1.0);
            let shapes = [x.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let out = t.adaptive_avg_pool(xv, oh, ow)?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[xv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x], run)
        })?);
    }

    // bilinear upsample
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("bilinear_upsample", trials, &mut rng, |rng| {
            let (h, w, c) = (2 + index(rng, 3), 2 + index(rng, 3), 1 + index(rng, 2));
            let (oh, ow) = (h + index(rng, 5), w + index(rng, 5));
            let x = rand_t(rng, Dims4::new(1, h, w, c), -1.0, 1.0);
            let probe = rand_t(rng, Dims4::new(1, oh, ow, c), -1.0, 1.0);
            let shapes = [x.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let out = t.bilinear_upsample(xv, oh, ow)?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[xv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x], run)
        })?);
    }

    // relu and sigmoid
    for (name, use_relu) in [("relu", true), ("sigmoid", false)] {
        let mut rng = next_rng();
        cases.push(GradCase::run(name, trials, &mut rng, |rng| {
            let d = Dims4::new(1, 2 + index(rng, 3), 2 + index(rng, 3), 1 + index(rng, 2));
            let x = if use_relu { rand_t_off_zero(rng, d) } else { rand_t(rng, d, -3.0, 3.0) };
            let probe = rand_t(rng, d, -1.0, 1.0);
            let shapes = [d];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let out = if use_relu { t.relu(xv)? } else { t.sigmoid(xv)? };
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[xv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x], run)
        })?);
    }

    // elementwise composite: (a+b) * (a - 0.5*b), probe-summed
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("add_sub_mul_scale", trials, &mut rng, |rng| {
            let d = Dims4::new(1, 2 + index(rng, 3), 2 + index(rng, 3), 1 + index(rng, 2));
            let a = rand_t(rng, d, -1.0, 1.0);
            let b = rand_t(rng, d, -1.0, 1.0);
            let probe = rand_t(rng, d, -1.0, 1.0);
            let shapes = [d, d];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let av = t.leaf(params[0].clone());
                let bv = t.leaf(params[1].clone());
                let s = t.add(av, bv)?;
                let half = t.scale(bv, 0.5)?;
                let dif = t.sub(av, half)?;
                let out = t.mul(s, dif)?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g =
                    if want { Some(grads_for(&mut t, loss, &[av, bv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![a, b], run)
        })?);
    }

    // channel concatenation
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("concat_channels", trials, &mut rng, |rng| {
            let (h, w) = (2 + index(rng, 3), 2 + index(rng, 3));
            let (c1, c2) = (1 + index(rng, 2), 1 + index(rng, 2));
            let a = rand_t(rng, Dims4::new(1, h, w, c1), -1.0, 1.0);
            let b = rand_t(rng, Dims4::new(1, h, w, c2), -1.0, 1.0);
            let probe = rand_t(rng, Dims4::new(1, h, w, c1 + c2), -1.0, 1.0);
            let shapes = [a.dims(), b.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let av = t.leaf(params[0].clone());
                let bv = t.leaf(params[1].clone());
                let out = t.concat_channels(&[av, bv])?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let g =
                    if want { Some(grads_for(&mut t, loss, &[av, bv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![a, b], run)
        })?);
    }

    // classifier head shape: global pool -> 1x1 conv -> mean
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("gap_linear_mean", trials, &mut rng, |rng| {
            let (b, c) = (1 + index(rng, 2), 2 + index(rng, 2));
            let x = rand_t(rng, Dims4::new(b, 4, 4, c), -1.0, 1.0);
            let wt = rand_t(rng, Dims4::new(1, 1, c, 1), -0.7, 0.7);
            let bs = rand_t(rng, Dims4::new(1, 1, 1, 1), -0.3, 0.3);
            let shapes = [x.dims(), wt.dims(), bs.dims()];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let wv = t.leaf(params[1].clone());
                let bv = t.leaf(params[2].clone());
                let pooled = t.global_avg_pool(xv)?;
                let logits = t.conv2d(pooled, wv, bv, None)?;
                let loss = t.mean_all(logits)?;
                let val = t.val(loss).data()[0];
                let g =
                    if want { Some(grads_for(&mut t, loss, &[xv, wv, bv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x, wt, bs], run)
        })?);
    }

    // scalar selection (the Grad-CAM target)
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("select_one", trials, &mut rng, |rng| {
            let d = Dims4::new(1, 3, 3, 2);
            let x = rand_t(rng, d, -1.0, 1.0);
            let (sy, sx, sc) = (index(rng, 3), index(rng, 3), index(rng, 2));
            let shapes = [d];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let xv = t.leaf(params[0].clone());
                let sq = t.mul(xv, xv)?;
                let loss = t.select_one(sq, 0, sy, sx, sc)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[xv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![x], run)
        })?);
    }

    // losses
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("bce_with_logits", trials, &mut rng, |rng| {
            let d = Dims4::new(1 + index(rng, 3), 1, 1, 1);
            let z = rand_t(rng, d, -4.0, 4.0);
            let y = Tensor4::from_fn(d, |_| index(rng, 2) as f64);
            let shapes = [d];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let zv = t.leaf(params[0].clone());
                let loss = t.bce_with_logits(zv, &y)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[zv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![z], run)
        })?);
    }
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("focal_loss", trials, &mut rng, |rng| {
            let d = Dims4::new(1, 2 + index(rng, 2), 2 + index(rng, 2), 1);
            let z = rand_t(rng, d, -4.0, 4.0);
            let y = Tensor4::from_fn(d, |_| index(rng, 2) as f64);
            let gamma = [0.0, 1.0, 2.0, 3.0][index(rng, 4)];
            let alpha = uniform(rng, 0.1, 0.9);
            let shapes = [d];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let zv = t.leaf(params[0].clone());
                let loss = t.focal_loss(zv, &y, alpha, gamma)?;
                let val = t.val(loss).data()[0];
                let g = if want { Some(grads_for(&mut t, loss, &[zv], &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![z], run)
        })?);
    }

    // a complete CueCAn unit on (1, 8, 8, 2)
    {
        let mut rng = next_rng();
        cases.push(GradCase::run("cuecan_unit", trials, &mut rng, |rng| {
            let c = 2usize;
            let spec = UnitSpec { k: [3, 5][index(rng, 2)], edge: index(rng, 2) == 1 };
            let row_mask = build_mask(spec.k, spec.variant(), Orientation::RowFill).expect("k");
            let col_mask = build_mask(spec.k, spec.variant(), Orientation::ColumnFill).expect("k");
            let f = rand_t(rng, Dims4::new(1, 8, 8, c), -1.0, 1.0);
            let row_w = init_masked_weight(spec.k, c, c, &row_mask, rng);
            let col_w = init_masked_weight(spec.k, c, c, &col_mask, rng);
            let row_b = rand_t(rng, Dims4::new(1, 1, 1, c), -0.2, 0.2);
            let col_b = rand_t(rng, Dims4::new(1, 1, 1, c), -0.2, 0.2);
            let merge_w = rand_t(rng, Dims4::new(1, 1, 3 * c, c), -0.5, 0.5);
            let merge_b = rand_t(rng, Dims4::new(1, 1, 1, c), -0.2, 0.2);
            let probe = rand_t(rng, Dims4::new(1, 8, 8, c), -1.0, 1.0);
            let shapes = [
                f.dims(),
                row_w.dims(),
                row_b.dims(),
                col_w.dims(),
                col_b.dims(),
                merge_w.dims(),
                merge_b.dims(),
            ];
            let run: CaseRun<'static> = Box::new(move |params, want| {
                let mut t = Tape::new();
                let fv = t.leaf(params[0].clone());
                let wires = CueCanWires {
                    row_w: t.leaf(params[1].clone()),
                    row_b: t.leaf(params[2].clone()),
                    col_w: t.leaf(params[3].clone()),
                    col_b: t.leaf(params[4].clone()),
                    merge_w: t.leaf(params[5].clone()),
                    merge_b: t.leaf(params[6].clone()),
                };
                let out = unit_forward(&mut t, fv, &wires, &row_mask, &col_mask, 8)?;
                let loss = probe_loss(&mut t, out, &probe)?;
                let val = t.val(loss).data()[0];
                let vars = [
                    fv,
                    wires.row_w,
                    wires.row_b,
                    wires.col_w,
                    wires.col_b,
                    wires.merge_w,
                    wires.merge_b,
                ];
                let g = if want { Some(grads_for(&mut t, loss, &vars, &shapes)?) } else { None };
                Ok((val, g))
            });
            (vec![f, row_w, row_b, col_w, col_b, merge_w, merge_b], run)
        })?);
    }

    Ok(SuiteReport {
        cases: cases
            .into_iter()
            .map(|c| CaseReport {
                name: c.name,
                trials,
                worst: c.worst,
                tol: FD_TOL,
                pass: c.worst < FD_TOL,
            })
            .collect(),
    })
}

/// Oracle suite: production kernels against the naive references on random
/// instances. Float cases must agree to 1e-12, blob boxes exactly.
pub fn run_oracle_suite(seed: u64, instances: usize) -> CoreResult<SuiteReport> {
    let mut cases = Vec::new();
    let mut case_idx = 100u64;
    let mut next_rng = || {
        case_idx += 1;
        stream(seed, Domain::Check, case_idx)
    };

    // conv2d: plain, 1x1, and masked taps
    {
        let mut rng = next_rng();
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let (b, h, w) = (1 + index(&mut rng, 2), 1 + index(&mut rng, 7), 1 + index(&mut rng, 7));
            let (cin, cout) = (1 + index(&mut rng, 3), 1 + index(&mut rng, 3));
            let k = [1, 3, 5][index(&mut rng, 3)];
            let mask = if k > 1 && index(&mut rng, 2) == 1 {
                Some(random_mask(&mut rng, k))
            } else {
                None
            };
            let x = rand_t(&mut rng, Dims4::new(b, h, w, cin), -2.0, 2.0);
            let wt = rand_t(&mut rng, Dims4::new(k, k, cin, cout), -1.0, 1.0);
            let bs = rand_t(&mut rng, Dims4::new(1, 1, 1, cout), -1.0, 1.0);
            let fast = kernels::conv2d_fwd(&x, &wt, &bs, mask.as_ref())?;
            let slow = reference::conv2d_ref(&x, &wt, &bs, mask.as_ref());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                worst = worst.max((a - b).abs());
            }
        }
        cases.push(CaseReport {
            name: "conv2d_oracle",
            trials: instances,
            worst,
            tol: ORACLE_TOL,
            pass: worst <= ORACLE_TOL,
        });
    }

    // adaptive pool
    {
        let mut rng = next_rng();
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let (h, w, c) = (1 + index(&mut rng, 9), 1 + index(&mut rng, 9), 1 + index(&mut rng, 3));
            let (oh, ow) = (1 + index(&mut rng, h), 1 + index(&mut rng, w));
            let b = 1 + index(&mut rng, 2);
            let x = rand_t(&mut rng, Dims4::new(b, h, w, c), -2.0, 2.0);
            let fast = kernels::adaptive_avg_pool_fwd(&x, oh, ow)?;
            let slow = reference::adaptive_avg_pool_ref(&x, oh, ow);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                worst = worst.max((a - b).abs());
            }
        }
        cases.push(CaseReport {
            name: "adaptive_pool_oracle",
            trials: instances,
            worst,
            tol: ORACLE_TOL,
            pass: worst <= ORACLE_TOL,
        });
    }

    // bilinear upsample
    {
        let mut rng = next_rng();
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let (h, w, c) = (1 + index(&mut rng, 5), 1 + index(&mut rng, 5), 1 + index(&mut rng, 3));
            let (oh, ow) = (h + index(&mut rng, 8), w + index(&mut rng, 8));
            let x = rand_t(&mut rng, Dims4::new(1, h, w, c), -2.0, 2.0);
            let fast = kernels::bilinear_upsample_fwd(&x, oh, ow)?;
            let slow = reference::bilinear_upsample_ref(&x, oh, ow);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                worst = worst.max((a - b).abs());
            }
        }
        cases.push(CaseReport {
            name: "upsample_oracle",
            trials: instances,
            worst,
            tol: ORACLE_TOL,
            pass: worst <= ORACLE_TOL,
        });
    }

    // focal loss (and bce as its gamma=0 relative) against the textbook form
    {
        let mut rng = next_rng();
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let d = Dims4::new(1, 1 + index(&mut rng, 4), 1 + index(&mut rng, 4), 1);
            let z = rand_t(&mut rng, d, -10.0, 10.0);
            let y = Tensor4::from_fn(d, |_| index(&mut rng, 2) as f64);
            let gamma = [0.0, 1.0, 2.0, 3.5][index(&mut rng, 4)];
            let alpha = uniform(&mut rng, 0.1, 0.9);
            let mut t = Tape::new();
            let zv = t.leaf(z.clone());
            let fast = t.focal_loss(zv, &y, alpha, gamma)?;
            let fast = t.val(fast).data()[0];
            let slow = reference::focal_ref(&z, &y, alpha, gamma);
            worst = worst.max((fast - slow).abs());

            let mut t = Tape::new();
            let zv = t.leaf(z.clone());
            let fast_b = t.bce_with_logits(zv, &y)?;
            let fast_b = t.val(fast_b).data()[0];
            let slow_b = reference::bce_ref(&z, &y);
            worst = worst.max((fast_b - slow_b).abs());
        }
        cases.push(CaseReport {
            name: "focal_bce_oracle",
            trials: instances,
            worst,
            tol: ORACLE_TOL,
            pass: worst <= ORACLE_TOL,
        });
    }

    // blob extraction: exact equality required
    {
        let mut rng = next_rng();
        let mut mismatches = 0usize;
        for _ in 0..instances {
            let (h, w) = (4 + index(&mut rng, 13), 4 + index(&mut rng, 13));
            let fill = uniform(&mut rng, 0.15, 0.6);
            let tau = 0.5;
            let map: Vec<f64> = (0..h * w)
                .map(|_| {
                    let r = uniform(&mut rng, 0.0, 1.0);
                    if r < fill {
                        0.9
                    } else if r < fill + 0.05 {
                        tau // exactly at threshold: must be excluded (strict >)
                    } else {
                        0.1
                    }
                })
                .collect();
            let min_area = [1, 4][index(&mut rng, 2)];
            let fast: Vec<_> = crate::blob::extract_blobs(&map, h, w, tau, min_area)
                .into_iter()
                .map(|b| (b.x, b.y, b.w, b.h, b.area))
                .collect();
            let slow = reference::blob_boxes_ref(&map, h, w, tau, min_area);
            if fast != slow {
                mismatches += 1;
            }
        }
        cases.push(CaseReport {
            name: "blob_oracle",
            trials: instances,
            worst: mismatches as f64,
            tol: 0.0,
            pass: mismatches == 0,
        });
    }

    Ok(SuiteReport { cases })
}
