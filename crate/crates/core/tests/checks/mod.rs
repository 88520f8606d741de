//! Verification checks shared by the integration tests and the acceptance
//! runner. Each check returns a one-line summary on success and the first
//! violation on failure.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dem_core::dem::{dem_loss, early_stop_check, train, TrainControl};
use dem_core::dirichlet::{hard_distance, smooth_distance, Enforcement, SpatialValue};
use dem_core::expr::{self, models, parse_spatial, Bindings};
use dem_core::fem::fem_solve;
use dem_core::material::{
    linear_stress, MaterialModel, Mat3, NeoHookean, PlaneAssumption, GENT_THOMAS_DEFAULT, ISIHARA_DEFAULT,
};
use dem_core::mesh::{parse_msh, write_msh22, ElementKind, Mesh, Point, GAMMA_U};
use dem_core::nn::{Activation, MlpConfig, MlpParams};
use dem_core::problem::{post_fields, relative_difference, relative_l2_error, DemProblem, SolveResult};
use dem_core::quadrature::{build_eval_table, rule_for, EvalTable};
use dem_core::results::vtk::render_vtk;
use dem_core::results::{FieldBundle, RunConfig};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `|a - b| / max(1, |b|)`: relative for large values, absolute near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn fixtures_dir() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let own = here.join("fixtures");
    if own.join("square_2x2.msh").exists() {
        own
    } else {
        here.join("../core/fixtures")
    }
}

pub fn fixture(name: &str) -> Mesh {
    let path = fixtures_dir().join(format!("{name}.msh"));
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_msh(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn spatial(exprs: &[&str]) -> SpatialValue {
    SpatialValue::Expr(exprs.iter().map(|s| parse_spatial(s).unwrap()).collect())
}

// ---------------------------------------------------------------------------
// shape functions and quadrature

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Integral of `x^p y^q z^r` over the reference element.
fn reference_monomial(kind: ElementKind, p: u32, q: u32, r: u32) -> f64 {
    let line = |k: u32| if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
    match kind {
        ElementKind::Line2 => line(p),
        ElementKind::Quad4 => line(p) * line(q),
        ElementKind::Tri3 | ElementKind::TriSurface => factorial(p) * factorial(q) / factorial(p + q + 2),
        ElementKind::Tet4 => factorial(p) * factorial(q) * factorial(r) / factorial(p + q + r + 3),
    }
}

fn monomials(dim: usize, degree: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for p in 0..=degree {
        for q in 0..=degree - p {
            for r in 0..=degree - p - q {
                if (dim < 2 && q > 0) || (dim < 3 && r > 0) {
                    continue;
                }
                out.push((p, q, r));
            }
        }
    }
    out
}

fn table_invariants(name: &str, table: &EvalTable) -> Result<(), String> {
    for p in 0..table.len() {
        let sum: f64 = table.shape(p).iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("{name}: point {p} shape sum {sum}"))?;
        for a in 0..table.dim() {
            let g: f64 = table.grads(p).iter().map(|g| g[a]).sum();
            ensure(g.abs() <= 1e-10, || format!("{name}: point {p} gradient sum {g:e} along axis {a}"))?;
        }
        ensure(table.weight(p) > 0.0, || format!("{name}: non-positive weight at point {p}"))?;
    }
    Ok(())
}

/// Partition of unity, zero gradient sums, monomial exactness and exact
/// gradients of interpolated linear fields.
pub fn shape_suite() -> Outcome {
    let mut points = 0;
    for kind in [ElementKind::Line2, ElementKind::Tri3, ElementKind::Quad4, ElementKind::Tet4] {
        let dim = kind.topological_dim();
        for order in 1..=3 {
            let rule = rule_for(kind, order).map_err(|e| e.to_string())?;
            for (p, q, r) in monomials(dim, order as u32) {
                let got: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x[0].powi(p as i32) * x[1].powi(q as i32) * x[2].powi(r as i32))
                    .sum();
                let exact = reference_monomial(kind, p, q, r);
                ensure((got - exact).abs() <= 1e-12, || {
                    format!("{kind:?} order {order}: x^{p} y^{q} z^{r} gives {got}, exact {exact}")
                })?;
            }
        }
    }
    for name in ["square_2x2", "square_quad_4", "cube_tet_3"] {
        let mesh = fixture(name);
        let dim = mesh.dim;
        for order in 1..=3 {
            let tables = build_eval_table(&mesh, order, order).map_err(|e| format!("{name}: {e}"))?;
            let t = &tables.domain;
            table_invariants(name, t)?;
            points += t.len();
            // the fixtures are unit squares and cubes
            for (p, q, r) in monomials(dim, order as u32) {
                let got = t.integrate(|x| x[0].powi(p as i32) * x[1].powi(q as i32) * x[2].powi(r as i32));
                let exact = 1.0 / ((p + 1) * (q + 1) * (r + 1)) as f64;
                ensure((got - exact).abs() <= 1e-12, || {
                    format!("{name} order {order}: x^{p} y^{q} z^{r} gives {got}, exact {exact}")
                })?;
            }
            let b = [0.7, -1.3, 2.1];
            let nodal: Vec<f64> = mesh
                .nodes
                .iter()
                .map(|x| 0.4 + (0..dim).map(|a| b[a] * x[a]).sum::<f64>())
                .collect();
            let f = t.interpolate(&nodal, 1);
            for p in 0..t.len() {
                for a in 0..dim {
                    let g = f.grads[p * dim + a];
                    ensure((g - b[a]).abs() <= 1e-12, || {
                        format!("{name}: interpolated gradient {g} at point {p}, expected {}", b[a])
                    })?;
                }
            }
        }
    }
    Ok(format!("rules for 4 element kinds, {points} table points on tri3/quad4/tet4 fixtures"))
}

// ---------------------------------------------------------------------------
// hyperelastic closed forms

type M3 = [[f64; 3]; 3];

fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn transpose(a: &M3) -> M3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// Cofactor matrix, `d det(F) / dF`.
fn cofactor(f: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            c[i][j] = f[i1][j1] * f[i2][j2] - f[i1][j2] * f[i2][j1];
        }
    }
    c
}

#[derive(Debug, Clone, Copy)]
pub enum Hyperelastic {
    NeoHookean,
    Isihara,
    GentThomas,
}

impl Hyperelastic {
    pub const ALL: [Hyperelastic; 3] = [Hyperelastic::NeoHookean, Hyperelastic::Isihara, Hyperelastic::GentThomas];

    pub fn expression(self) -> &'static str {
        match self {
            Hyperelastic::NeoHookean => models::NEO_HOOKEAN,
            Hyperelastic::Isihara => models::ISIHARA,
            Hyperelastic::GentThomas => models::GENT_THOMAS,
        }
    }

    pub fn builtin(self) -> MaterialModel {
        match self {
            Hyperelastic::NeoHookean => MaterialModel::NeoHookean(NeoHookean::Isochoric { a0: 0.5, a1: 1.5 }),
            Hyperelastic::Isihara => MaterialModel::Isihara { a: ISIHARA_DEFAULT },
            Hyperelastic::GentThomas => MaterialModel::GentThomas { a: GENT_THOMAS_DEFAULT },
        }
    }

    /// Energy density and `dPsi/dF` from the invariants of `C = F^T F`.
    pub fn closed_form(self, h: &M3) -> (f64, M3) {
        let mut f = *h;
        for (i, row) in f.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        let c = mat_mul(&transpose(&f), &f);
        let cof = cofactor(&f);
        let j: f64 = (0..3).map(|k| f[0][k] * cof[0][k]).sum();
        let i1 = c[0][0] + c[1][1] + c[2][2];
        let tr_c2: f64 = c.iter().flatten().map(|v| v * v).sum();
        let i2 = 0.5 * (i1 * i1 - tr_c2);
        let fc = mat_mul(&f, &c);
        let i1b = j.powf(-2.0 / 3.0) * i1;
        let i2b = j.powf(-4.0 / 3.0) * i2;

        let (psi, d1, d2, dj) = match self {
            Hyperelastic::NeoHookean => (0.5 * (i1b - 3.0) + 1.5 * (j - 1.0).powi(2), 0.5, 0.0, 3.0 * (j - 1.0)),
            Hyperelastic::Isihara => (
                0.5 * (i1b - 3.0) + (i2b - 3.0) + (i1b - 3.0).powi(2) + 1.5 * (j - 1.0).powi(2),
                0.5 + 2.0 * (i1b - 3.0),
                1.0,
                3.0 * (j - 1.0),
            ),
            Hyperelastic::GentThomas => (
                0.5 * (i1b - 3.0) + (i2b / 3.0).ln() + 1.5 * (j - 1.0).powi(2),
                0.5,
                1.0 / i2b,
                3.0 * (j - 1.0),
            ),
        };
        let mut p = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let f_inv_t = cof[a][b] / j;
                let di1b = j.powf(-2.0 / 3.0) * 2.0 * f[a][b] - 2.0 / 3.0 * i1b * f_inv_t;
                let di2b = j.powf(-4.0 / 3.0) * 2.0 * (i1 * f[a][b] - fc[a][b]) - 4.0 / 3.0 * i2b * f_inv_t;
                p[a][b] = d1 * di1b + d2 * di2b + dj * cof[a][b];
            }
        }
        (psi, p)
    }
}

fn determinant(h: &M3) -> f64 {
    let mut f = *h;
    for (i, row) in f.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let cof = cofactor(&f);
    (0..3).map(|k| f[0][k] * cof[0][k]).sum()
}

/// Random displacement gradients with `det(I + H) > min_j`.
pub fn random_states(rng: &mut impl Rng, n: usize, amplitude: f64, min_j: f64) -> Vec<M3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut h = [[0.0; 3]; 3];
        for v in h.iter_mut().flatten() {
            *v = rng.random_range(-amplitude..amplitude);
        }
        if determinant(&h) > min_j {
            out.push(h);
        }
    }
    out
}

/// The expression strings and the builtin densities against the
/// invariant-based closed forms.
pub fn expressions_vs_closed_form(samples: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let states = random_states(&mut rng, samples, 0.6, 0.2);
    let mut worst: f64 = 0.0;
    for model in Hyperelastic::ALL {
        let e = expr::parse(model.expression()).map_err(|e| format!("{model:?}: {e}"))?;
        let report = e.validate(3).map_err(|e| format!("{model:?}: {e}"))?;
        ensure(report.symbols.len() == 9, || format!("{model:?} uses {} symbols", report.symbols.len()))?;
        let builtin = model.builtin();
        for h in &states {
            let (psi, p) = model.closed_form(h);
            let (v, partials) = e.partials(&Bindings::from_gradient(h)).map_err(|e| format!("{model:?}: {e}"))?;
            let d = builtin.density(3, &[0.0; 3], h).map_err(|e| format!("{model:?}: {e}"))?;
            let mut errs = vec![rel_err(v, psi), rel_err(d.psi, psi)];
            for k in 0..9 {
                errs.push(rel_err(partials[k], p[k / 3][k % 3]));
                errs.push(rel_err(d.d_grad[k / 3][k % 3], p[k / 3][k % 3]));
            }
            let m = errs.iter().cloned().fold(0.0, f64::max);
            ensure(m <= 1e-10, || format!("{model:?} at H = {h:?}: relative error {m:e}"))?;
            worst = worst.max(m);
        }
    }
    Ok(format!("3 models x {samples} states, max relative error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// gradients

/// Largest `rel_err` between `grad` and central differences of `f`.
pub fn fd_error(x: &[f64], grad: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut x = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let fp = f(&x);
        x[i] = x0 - h;
        let fm = f(&x);
        x[i] = x0;
        worst = worst.max(rel_err(grad[i], (fp - fm) / (2.0 * h)));
    }
    worst
}

fn vjp_check() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for act in [Activation::Tanh, Activation::Silu, Activation::Gelu] {
        for (input, hidden, output) in [(2, vec![4], 1), (3, vec![8, 8], 3), (2, vec![6, 5, 4], 2)] {
            let cfg = MlpConfig {
                input_dim: input,
                output_dim: output,
                hidden,
                activation: act,
                seed: rng.random(),
            };
            let mut params = MlpParams::init(&cfg).map_err(|e| e.to_string())?;
            for v in params.values_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
            let n = 6;
            let x: Vec<f64> = (0..n * input).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ct: Vec<f64> = (0..n * output).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = params.vjp(&x, &ct).map_err(|e| e.to_string())?;
            let theta = params.values().to_vec();
            let mut q = params.clone();
            let err = fd_error(&theta, &g, 1e-6, |t| {
                q.values_mut().copy_from_slice(t);
                q.forward(&x).unwrap().iter().zip(&ct).map(|(a, b)| a * b).sum()
            });
            ensure(err < 1e-5, || format!("{act:?} {input}->{output}: vjp error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Problems covering every builtin model and one custom density, with
/// loads and Dirichlet penalties switched on.
pub fn loss_fixtures() -> Vec<(String, DemProblem)> {
    let mut out = Vec::new();
    let mut add = |name: &str, mesh: &str, material: MaterialModel, traction: &[&str], smooth: bool| {
        let mut p = DemProblem::new(fixture(mesh), material).unwrap();
        let c = p.components();
        p.traction = Some(spatial(&traction[..c]));
        p.body_force = Some(spatial(&["sin(x+y)", "0.5*x", "-y"][..c]));
        if let Some(d) = p.dirichlet.as_mut() {
            d.value = spatial(&["0.1*x*y", "0.05*y", "0.02"][..c]);
            if smooth {
                d.enforcement = Enforcement::SmoothDistancePenalty;
            }
        }
        out.push((name.to_string(), p));
    };
    let lin = |plane| MaterialModel::LinearElastic {
        young: 10.0,
        poisson: 0.3,
        plane,
    };
    add("poisson", "square_2x2", MaterialModel::Poisson, &["5"], true);
    add("poisson/quad", "square_quad_4", MaterialModel::Poisson, &["1"], true);
    add("screened_poisson", "square_2x2", MaterialModel::ScreenedPoisson { k: 2.0 }, &["1+x"], false);
    add("linear_elastic/strain", "square_2x2", lin(PlaneAssumption::Strain), &["1", "0.5"], true);
    add("linear_elastic/stress", "square_quad_4", lin(PlaneAssumption::Stress), &["1", "y"], false);
    add("linear_elastic/3d", "cube_tet_3", lin(PlaneAssumption::Strain), &["1", "0", "z"], true);
    add(
        "neo_hookean/lame",
        "square_2x2",
        MaterialModel::NeoHookean(NeoHookean::Lame { young: 10.0, poisson: 0.3 }),
        &["0.3", "0"],
        true,
    );
    for model in Hyperelastic::ALL {
        add(
            &format!("{model:?}").to_lowercase(),
            "cube_tet_3",
            model.builtin(),
            &["0.3", "0", "0.1"],
            false,
        );
    }
    add(
        "custom/2d",
        "square_2x2",
        MaterialModel::custom("0.5*(ux**2 + vy**2) + 0.3*(uy + vx)**2 + 0.1*exp(ux*vy)").unwrap(),
        &["1", "0"],
        true,
    );
    add(
        "custom/neo_hookean",
        "cube_tet_3",
        MaterialModel::custom(models::NEO_HOOKEAN).unwrap(),
        &["0.3", "0", "0"],
        true,
    );
    out
}

/// Parameter vector-Jacobian products and loss cotangents against central
/// differences.
pub fn gradient_integrity() -> Outcome {
    let vjp = vjp_check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let fixtures = loss_fixtures();
    for (name, p) in &fixtures {
        let n = p.mesh.node_count() * p.components();
        let nodal: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
        let (_, grad) = dem_loss(p, &nodal).map_err(|e| format!("{name}: {e}"))?;
        let err = fd_error(&nodal, &grad, 1e-6, |x| dem_loss(p, x).unwrap().0);
        ensure(err < 1e-6, || format!("{name}: loss cotangent error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!(
        "vjp max error {vjp:.1e}; {} loss fixtures, max cotangent error {worst:.1e}",
        fixtures.len()
    ))
}

// ---------------------------------------------------------------------------
// distances

pub fn smooth_distance_sandwich(samples: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut report = Vec::new();
    for name in ["square_mixed_20", "cube_dirichlet_3"] {
        let mesh = fixture(name);
        let facets = mesh.boundary_facets(GAMMA_U).map_err(|e| e.to_string())?;
        let m = facets.len() as f64;
        let (lo, hi) = mesh.bounding_box();
        let random_point = |rng: &mut ChaCha8Rng| -> Point {
            let mut p = [0.0; 3];
            for a in 0..mesh.dim {
                p[a] = rng.random_range(lo[a] - 0.5..hi[a] + 0.5);
            }
            p
        };
        let tau = 1e-3;
        let mut widest: f64 = 0.0;
        for _ in 0..samples {
            let p = random_point(&mut rng);
            let d = hard_distance(p, &facets).map_err(|e| e.to_string())?;
            let ds = smooth_distance(p, &facets, tau).map_err(|e| e.to_string())?;
            let upper = d * d + tau * m.ln();
            ensure(d * d - 1e-12 <= ds && ds <= upper + 1e-12, || {
                format!("{name}: D_s = {ds} outside [{}, {upper}] at {p:?}", d * d)
            })?;
            widest = widest.max(ds - d * d);
        }
        for _ in 0..100 {
            let p = random_point(&mut rng);
            let d = hard_distance(p, &facets).map_err(|e| e.to_string())?;
            let ds = smooth_distance(p, &facets, 1e-9).map_err(|e| e.to_string())?;
            ensure((ds - d * d).abs() <= 1e-8, || format!("{name}: tau -> 0 gives {ds}, d^2 = {}", d * d))?;
        }
        report.push(format!("{name} (M = {m}, max gap {widest:.2e})"));
    }
    Ok(format!("{samples} points each on {}", report.join(", ")))
}

// ---------------------------------------------------------------------------
// finite elements

fn linear_value(coeffs: &[f64], x: Point) -> f64 {
    coeffs[0] + (1..coeffs.len()).map(|a| coeffs[a] * x[a - 1]).sum::<f64>()
}

fn patch_expr(coeffs: &[f64]) -> String {
    let axes = ["x", "y", "z"];
    let mut s = format!("{}", coeffs[0]);
    for (a, c) in coeffs[1..].iter().enumerate() {
        s += &format!(" + {c}*{}", axes[a]);
    }
    s
}

/// Linear data on the whole boundary: nodal values and fluxes or stresses
/// must be reproduced exactly.
fn patch_test(mesh: &str, material: MaterialModel) -> Result<f64, String> {
    let mut p = DemProblem::new(fixture(mesh), material).map_err(|e| e.to_string())?;
    let dim = p.dim();
    let c = p.components();
    let coeffs: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            (0..=dim)
                .map(|a| 0.01 * ((3 * k + a) as f64 + 1.0) * if (k + a) % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let exprs: Vec<String> = coeffs.iter().map(|k| patch_expr(k)).collect();
    p.dirichlet.as_mut().unwrap().value = spatial(&exprs.iter().map(String::as_str).collect::<Vec<_>>());
    let r = fem_solve(&p).map_err(|e| format!("{mesh}: {e}"))?;
    let mut worst: f64 = 0.0;
    for (i, x) in p.mesh.nodes.iter().enumerate() {
        for k in 0..c {
            worst = worst.max((r.solution[i * c + k] - linear_value(&coeffs[k], *x)).abs());
        }
    }
    ensure(worst < 1e-10, || format!("{mesh} {}: nodal error {worst:e}", p.material.name()))?;

    let mut h: Mat3 = [[0.0; 3]; 3];
    for k in 0..c {
        h[k][..dim].copy_from_slice(&coeffs[k][1..]);
    }
    let expected: Vec<f64> = if p.material.is_scalar() {
        (0..dim).map(|a| -h[0][a]).collect()
    } else {
        let (lambda, mu) = p.material.elastic_lame(dim).unwrap();
        let s = linear_stress(lambda, mu, dim, &h);
        (0..dim * dim).map(|k| s[k / dim][k % dim]).collect()
    };
    let nc = r.fields.components;
    let scale = expected.iter().fold(1f64, |m, v| m.max(v.abs()));
    for node in 0..p.mesh.node_count() {
        for k in 0..nc {
            let e = (r.fields.nodal[node * nc + k] - expected[k]).abs() / scale;
            ensure(e < 1e-8, || format!("{mesh}: derived field off by {e:e} at node {node}"))?;
        }
    }
    Ok(worst)
}

pub fn manufactured_poisson(mesh: &str) -> Result<DemProblem, String> {
    let mut p = DemProblem::new(fixture(mesh), MaterialModel::Poisson).map_err(|e| e.to_string())?;
    p.body_force = Some(spatial(&["2*pi**2*sin(pi*x)*sin(pi*y)"]));
    Ok(p)
}

pub fn manufactured_error(p: &DemProblem, r: &SolveResult) -> f64 {
    relative_l2_error(&p.tables.domain, &r.solution, 1, |x, o| o[0] = (PI * x[0]).sin() * (PI * x[1]).sin())
}

pub fn fem_oracle() -> Outcome {
    let elastic = || MaterialModel::LinearElastic {
        young: 1000.0,
        poisson: 0.3,
        plane: PlaneAssumption::Strain,
    };
    let mut worst: f64 = 0.0;
    for mesh in ["square_dirichlet_8", "square_quad_4", "cube_dirichlet_3"] {
        worst = worst.max(patch_test(mesh, MaterialModel::Poisson)?);
        worst = worst.max(patch_test(mesh, elastic())?);
    }
    worst = worst.max(patch_test(
        "square_dirichlet_4",
        MaterialModel::LinearElastic {
            young: 2.6,
            poisson: 0.3,
            plane: PlaneAssumption::Stress,
        },
    )?);
    let mut errors = Vec::new();
    for n in [8, 16, 32] {
        let p = manufactured_poisson(&format!("square_dirichlet_{n}"))?;
        let r = fem_solve(&p).map_err(|e| e.to_string())?;
        errors.push(manufactured_error(&p, &r));
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    for r in &ratios {
        ensure((r - 4.0).abs() <= 0.8, || format!("convergence ratios {ratios:?} (errors {errors:?})"))?;
    }
    Ok(format!(
        "patch tests max nodal error {worst:.1e}; L2 errors {:.2e} {:.2e} {:.2e}, ratios {:.2} {:.2}",
        errors[0], errors[1], errors[2], ratios[0], ratios[1]
    ))
}

// ---------------------------------------------------------------------------
// DEM runs

pub fn poisson_fixture() -> DemProblem {
    let mut p = DemProblem::new(fixture("square_mixed_20"), MaterialModel::Poisson).unwrap();
    p.traction = Some(SpatialValue::Constant(vec![5.0]));
    p
}

pub fn beam_fixture() -> DemProblem {
    let material = MaterialModel::LinearElastic {
        young: 1000.0,
        poisson: 0.3,
        plane: PlaneAssumption::Strain,
    };
    let mut p = DemProblem::new(fixture("square_beam_20"), material).unwrap();
    p.traction = Some(SpatialValue::Constant(vec![10.0, 0.0]));
    p
}

pub fn plate_fixture(model: Hyperelastic) -> DemProblem {
    let mut p = DemProblem::new(fixture("plate_hole_3d"), model.builtin()).unwrap();
    p.traction = Some(SpatialValue::Constant(vec![3.0, 0.0, 0.0]));
    p
}

fn timed_train(p: &DemProblem, limit: Duration, name: &str) -> Result<SolveResult, String> {
    let start = Instant::now();
    let r = train(p, &TrainControl::default()).map_err(|e| format!("{name}: {e}"))?;
    let t = start.elapsed();
    ensure(t < limit, || format!("{name}: took {t:.1?}, limit {limit:?}"))?;
    Ok(r)
}

/// DEM against FEM on the flux and cantilever fixtures.
pub fn dem_vs_fem(seeds: &[u64]) -> Outcome {
    let mut report = Vec::new();
    for (name, base) in [("poisson", poisson_fixture()), ("elastic", beam_fixture())] {
        let fem = fem_solve(&base).map_err(|e| format!("{name}: {e}"))?;
        let mut diffs = Vec::new();
        for &seed in seeds {
            let mut p = base.clone();
            p.network.seed = seed;
            let dem = timed_train(&p, Duration::from_secs(300), name)?;
            let d = relative_difference(&dem.magnitude(), &fem.magnitude());
            ensure(d < 0.05, || format!("{name} seed {seed}: relative difference {d:.4}"))?;
            diffs.push(format!("{d:.4}"));
        }
        report.push(format!("{name} [{}]", diffs.join(", ")));
    }
    Ok(format!("relative differences {}", report.join("; ")))
}

pub fn dem_manufactured() -> Outcome {
    let p = manufactured_poisson("square_dirichlet_20")?;
    let start = Instant::now();
    let r = timed_train(&p, Duration::from_secs(180), "manufactured")?;
    let e = manufactured_error(&p, &r);
    ensure(r.history.len() <= 3000, || format!("{} epochs", r.history.len()))?;
    ensure(e < 0.02, || format!("relative L2 error {e:.4}"))?;
    Ok(format!(
        "relative L2 error {e:.4} after {} epochs in {:.1?}",
        r.history.len(),
        start.elapsed()
    ))
}

/// Running minimum sampled every `window` epochs never rises, and the run
/// ends below where it started.
pub fn monotone_trend(history: &[f64], window: usize) -> Result<(), String> {
    let mut best = f64::INFINITY;
    let mut last = f64::INFINITY;
    for (i, &l) in history.iter().enumerate() {
        best = best.min(l);
        if (i + 1) % window == 0 || i + 1 == history.len() {
            ensure(best <= last, || format!("best loss rose to {best} at epoch {i}"))?;
            last = best;
        }
    }
    ensure(!history.is_empty() && best < history[0], || "loss never fell below its start".into())
}

pub fn hyperelastic_sanity() -> Outcome {
    let mesh = fixture("plate_hole_3d");
    let tables = build_eval_table(&mesh, 2, 2).map_err(|e| e.to_string())?;
    let zero = vec![0.0; mesh.node_count() * 3];
    for model in Hyperelastic::ALL {
        let e = expr::parse(model.expression()).unwrap();
        let (v, partials) = e.partials(&Bindings::from_gradient(&[[0.0; 3]; 3])).map_err(|e| e.to_string())?;
        let d = model.builtin().density(3, &[0.0; 3], &[[0.0; 3]; 3]).map_err(|e| e.to_string())?;
        ensure(v.abs() <= 1e-12 && d.psi.abs() <= 1e-12, || format!("{model:?}: Psi(I) = {v}, {}", d.psi))?;
        ensure(
            partials.iter().chain(d.d_grad.iter().flatten()).all(|g| g.abs() <= 1e-10),
            || format!("{model:?}: non-zero stress at F = I"),
        )?;
        let fields = post_fields(&model.builtin(), &tables.domain, &zero, 3).map_err(|e| e.to_string())?;
        ensure(fields.nodal.iter().all(|s| s.abs() <= 1e-10), || {
            format!("{model:?}: post-processed stress non-zero at F = I")
        })?;
    }
    let mut report = Vec::new();
    for model in Hyperelastic::ALL {
        let p = plate_fixture(model);
        let r = train(&p, &TrainControl::default()).map_err(|e| format!("{model:?}: {e}"))?;
        monotone_trend(&r.history, 100).map_err(|e| format!("{model:?}: {e}"))?;
        let umax = r.magnitude().iter().cloned().fold(0.0, f64::max);
        report.push(format!(
            "{model:?} {} epochs, loss {:.4}, max |u| {umax:.3}",
            r.history.len(),
            r.final_loss
        ));
    }
    Ok(format!("stress-free at F = I; {}", report.join("; ")))
}

// ---------------------------------------------------------------------------
// early stopping

/// Loss decaying to `level`, then positive spikes of up to `10 rho |level|`.
pub fn converged_then_spiking(rng: &mut impl Rng, window: usize, rho: f64) -> Vec<f64> {
    let level = rng.random_range(0.5..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let decay = rng.random_range(200..800);
    let rate = rng.random_range(0.01..0.05);
    let start = rng.random_range(1.0..20.0);
    let mut h: Vec<f64> = (0..decay).map(|t| level + start * (-(rate * t as f64)).exp()).collect();
    let tail = window + rng.random_range(0..window);
    let amplitude = 10.0 * rho * level.abs();
    h.extend((0..tail).map(|_| level + rng.random_range(0.0..amplitude)));
    h
}

/// Strictly decreasing, with a random mix of steady, decaying and tiny steps.
pub fn strictly_decreasing(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut v = rng.random_range(-10.0..10.0);
    let mode = rng.random_range(0..3);
    let mut h = Vec::with_capacity(len);
    for t in 0..len {
        h.push(v);
        let step = match mode {
            0 => rng.random_range(1e-4..1e-2),
            1 => 5.0 * (-(t as f64) / 150.0).exp() * rng.random_range(0.5..1.5),
            _ => 1e-9 * rng.random_range(1.0..2.0),
        };
        let next = v - step;
        v = if next < v { next } else { v - v.abs().max(1.0) * f64::EPSILON * 4.0 };
    }
    h
}

pub fn early_stopping(sequences: usize) -> Outcome {
    let (w, rho) = (200, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..sequences {
        let h = converged_then_spiking(&mut rng, w, rho);
        ensure(early_stop_check(&h, w, rho), || format!("spiking sequence {k} did not trigger"))?;
    }
    for k in 0..sequences {
        let h = strictly_decreasing(&mut rng, 1200);
        ensure(h.windows(2).all(|p| p[1] < p[0]), || format!("sequence {k} is not strictly decreasing"))?;
        for n in 0..=h.len() {
            ensure(!early_stop_check(&h[..n], w, rho), || {
                format!("decreasing sequence {k} triggered at epoch {n}")
            })?;
        }
    }
    Ok(format!("{sequences} spiking sequences trigger, {sequences} decreasing sequences never do"))
}

// ---------------------------------------------------------------------------
// formats

pub const MESH_FIXTURES: [&str; 13] = [
    "square_2x2",
    "square_mixed_20",
    "square_dirichlet_4",
    "square_dirichlet_8",
    "square_dirichlet_16",
    "square_dirichlet_20",
    "square_dirichlet_32",
    "square_beam_20",
    "square_quad_4",
    "square_quad_beam_8",
    "cube_tet_3",
    "cube_dirichlet_3",
    "plate_hole_3d",
];

pub const CONFIG_FIXTURES: [&str; 4] = ["poisson", "beam", "manufactured", "plate_neo_hookean"];

pub fn msh_idempotence() -> Result<(), String> {
    for name in MESH_FIXTURES {
        let a = fixture(name);
        let text = write_msh22(&a);
        let b = parse_msh(text.as_bytes()).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b, || format!("{name}: re-parsed mesh differs"))?;
        ensure(write_msh22(&b) == text, || format!("{name}: second serialization differs"))?;
    }
    Ok(())
}

/// Bundles rendered against the golden files.
pub fn golden_bundles() -> Vec<(&'static str, String)> {
    let square = fixture("square_2x2");
    let cube = fixture("cube_tet_3");
    let point_fn = |m: &Mesh, f: &dyn Fn(&[f64]) -> Vec<f64>| -> Vec<f64> { m.nodes.iter().flat_map(|x| f(x)).collect() };
    let square_cells = square.elements.iter().filter(|e| e.kind.is_volume(2)).count();
    let cube_cells = cube.elements.iter().filter(|e| e.kind.is_volume(3)).count();
    let b1 = FieldBundle::new(&square)
        .point("u", 1, point_fn(&square, &|x| vec![x[0] + 2.0 * x[1]]))
        .point("flux", 2, point_fn(&square, &|x| vec![-x[1], 0.25 * x[0]]))
        .cell("id", 1, (0..square_cells).map(|i| i as f64).collect());
    let b2 = FieldBundle::new(&cube)
        .point("u", 3, point_fn(&cube, &|x| vec![0.1 * x[0], -0.03 * x[1] * x[2], 1.0 / 3.0]))
        .point(
            "stress",
            9,
            point_fn(&cube, &|x| (0..9).map(|k| x[k % 3] * (k as f64 - 4.0)).collect()),
        )
        .cell("volume_fraction", 1, vec![1.0 / cube_cells as f64; cube_cells]);
    vec![
        ("square_2x2.vtk", render_vtk(&b1).unwrap()),
        ("cube_tet_3.vtk", render_vtk(&b2).unwrap()),
    ]
}

/// Compares against `fixtures/golden`; `DEM_UPDATE_GOLDEN=1` rewrites them.
pub fn vtk_golden() -> Result<(), String> {
    let dir = fixtures_dir().join("golden");
    for (name, text) in golden_bundles() {
        let path = dir.join(name);
        if std::env::var("DEM_UPDATE_GOLDEN").is_ok_and(|v| v == "1") {
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            std::fs::write(&path, &text).map_err(|e| e.to_string())?;
        }
        let golden = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(golden == text.as_bytes(), || format!("{name} differs from the golden file"))?;
    }
    let again = golden_bundles();
    ensure(
        again.iter().zip(golden_bundles()).all(|(a, b)| a.1 == b.1),
        || "repeated renders differ".into(),
    )
}

pub fn config_round_trip() -> Result<(), String> {
    for name in CONFIG_FIXTURES {
        let path = fixtures_dir().join(format!("{name}.toml"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let a = RunConfig::from_toml_str(&text).map_err(|e| format!("{name}: {e}"))?;
        let once = a.to_toml_string();
        let b = RunConfig::from_toml_str(&once).map_err(|e| format!("{name} (re-read): {e}"))?;
        ensure(a == b, || format!("{name}: config changed on round trip"))?;
        ensure(b.to_toml_string() == once, || format!("{name}: serialization not idempotent"))?;
        let json = serde_json::to_value(&a).map_err(|e| e.to_string())?;
        let c = RunConfig::from_json_value(json).map_err(|e| format!("{name} (json): {e}"))?;
        ensure(a == c, || format!("{name}: JSON round trip differs"))?;
    }
    Ok(())
}

pub fn formats() -> Outcome {
    msh_idempotence()?;
    vtk_golden()?;
    config_round_trip()?;
    Ok(format!(
        "{} meshes, 2 VTK goldens, {} configs",
        MESH_FIXTURES.len(),
        CONFIG_FIXTURES.len()
    ))
}
