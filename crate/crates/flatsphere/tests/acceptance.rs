//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then asserts.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use flatsphere::billiards::{enumerate_generalized_diagonals, enumerate_periodic_families};
use flatsphere::bounds::{
    constants_uniform, constants_upper, corner_switch_windows, count_within, log2_diag_bound, log2_per_bound, log2_sc_bound,
    m0_constant, sigma_from_gap, verify_bounds,
};
use flatsphere::delaunay::delaunay_triangulation;
use flatsphere::enumerator::{count_table, cylinders_from_connections, enumerate_saddle_connections, enumerate_with_triangulation, relative_systole};
use flatsphere::fixtures::{
    b2_witness, c2_witness, delta_witness, delta_witness_stated_area, doubled_equilateral, fagnano_cut, fagnano_cut_stated_area,
    random_convex_polygon, DesignatedTrajectory, Example,
};
use flatsphere::infinite::{count_saddle_connections_infinite, random_infinite_sphere};
use flatsphere::surface::{curvature_gap, validate, FlatConeSurface};
use flatsphere::surgery::{collapse_in_order, fingerprint, generalized_surgery, random_polygon_hull, HullKind};
use flatsphere::tracer::{self_intersection_number, trace, trace_from_cone, Start, SurfacePoint, TraceError, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const SEED: u64 = 20240601;
const SURFACES: usize = 200;
const GAUSS_BONNET_TOL: f64 = 1e-9;
const DELAUNAY_TOL: f64 = 1e-9;
const CONSTANT_DIGITS_TOL: f64 = 5e-12;
const FORMULA_TOL: f64 = 1e-7;
const AREA_IDENTITY_TOL: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-7;
const ORDER_TOL: f64 = 1e-7;

fn report(id: usize, name: &str, pass: bool, detail: String) {
    println!("criterion {id:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn surfaces() -> Vec<FlatConeSurface> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    random_doubles(&mut rng, SURFACES).into_iter().map(|(_, s)| s).collect()
}

#[test]
fn criterion_01_structural() {
    let t0 = Instant::now();
    let all = surfaces();
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    for s in &all {
        let r = validate(s);
        worst = worst.max(r.gauss_bonnet_residual);
        if !r.pass || r.gauss_bonnet_residual >= GAUSS_BONNET_TOL {
            failed += 1;
        }
    }
    let dt = t0.elapsed();
    let pass = failed == 0 && dt < Duration::from_secs(10);
    report(1, "structural", pass, format!("{} surfaces, {failed} invalid, max Gauss-Bonnet residual {worst:.1e}, {dt:.2?}", all.len()));
    assert!(pass);
}

#[test]
fn criterion_02_delaunay() {
    let all = surfaces();
    let mut bad = 0;
    for s in &all {
        match delaunay_triangulation(s) {
            Ok(t) if t.is_delaunay() && t.edges.iter().all(|e| e.opposite_angle_sum <= PI + DELAUNAY_TOL) => {}
            _ => bad += 1,
        }
    }
    let eq = delaunay_triangulation(&doubled_equilateral()).unwrap();
    let (d, r) = (eq.width(), eq.max_circumradius());
    let eq_ok = (d - 3f64.sqrt() / 2.0).abs() < DELAUNAY_TOL && (r - 1.0 / 3f64.sqrt()).abs() < DELAUNAY_TOL;
    let pass = bad == 0 && eq_ok;
    report(2, "delaunay", pass, format!("{bad}/{} surfaces fail the angle condition; equilateral d(T) = {d:.12}, R(T) = {r:.12}", all.len()));
    assert!(pass);
}

fn random_trace(rng: &mut ChaCha8Rng, s: &FlatConeSurface, budget: f64) -> Trajectory {
    loop {
        match random_trajectory(rng, s, budget) {
            Ok(t) => return t,
            Err(TraceError::VertexGrazing { .. }) => continue,
            Err(e) => panic!("trace failed: {e}"),
        }
    }
}

#[test]
fn criterion_03_oracles() {
    let all = surfaces();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut iota_bad = 0;
    let mut tested = 0;
    let mut crossings = 0;
    while tested < 500 {
        let s = &all[tested % all.len()];
        let relsys = relative_systole(s).unwrap();
        let budget = rng.gen_range(0.05..1.0) * 20.0 * relsys;
        let t = random_trace(&mut rng, s, budget);
        let Ok(fast) = self_intersection_number(s, &t) else { continue };
        let slow = brute_force_iota(&t);
        crossings += slow;
        if fast != slow {
            iota_bad += 1;
        }
        tested += 1;
    }
    // Two-face surfaces: the doubled triangles among the random ones.
    let mut enum_bad = 0;
    let mut compared = 0;
    let mut total = 0;
    for s in all.iter().filter(|s| s.num_faces() == 2) {
        let relsys = relative_systole(s).unwrap();
        let r = 3.0 * relsys;
        let lib = enumerate_saddle_connections(s, r).unwrap();
        let naive = converged_naive(s, r);
        let mut a: Vec<(usize, usize, i64)> = Vec::new();
        for x in &lib {
            let q = (x.length * 1e8).round() as i64;
            a.push((x.start, x.end, q));
            a.push((x.end, x.start, q));
        }
        let mut b: Vec<(usize, usize, i64)> = naive.iter().map(|x| (x.start, x.end, (x.length * 1e8).round() as i64)).collect();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            enum_bad += 1;
        }
        compared += 1;
        total += lib.len();
    }
    let pass = iota_bad == 0 && enum_bad == 0 && compared > 0;
    report(
        3,
        "oracle equivalence",
        pass,
        format!(
            "iota: {iota_bad} mismatches in {tested} trajectories ({crossings} crossings); enumeration: {enum_bad} mismatches on {compared} two-face surfaces ({total} connections)"
        ),
    );
    assert!(pass);
}

/// Naive search deepened until four more levels add nothing within `r`.
fn converged_naive(s: &FlatConeSurface, r: f64) -> Vec<NaiveConnection> {
    let mut depth = 8;
    let mut prev = naive_saddle_connections(s, r, depth);
    loop {
        depth += 4;
        let next = naive_saddle_connections(s, r, depth);
        if next.len() == prev.len() {
            return next;
        }
        assert!(depth < 40, "naive search does not settle");
        prev = next;
    }
}

#[test]
fn criterion_04_constants() {
    let mut worst: f64 = 0.0;
    let mut check = |lib: f64, hp: f64| {
        let rel = (lib - hp).abs() / hp.abs();
        worst = worst.max(rel);
        rel <= CONSTANT_DIGITS_TOL
    };
    let (c1, c2) = constants_uniform(3, 1.0 / 3.0).unwrap();
    let (a1, a2) = constants_upper(3, 1.0 / 3.0).unwrap();
    let hp = constants_hp(3, 1, 3);
    let mut ok = check(c1, hp[0]) & check(c2, hp[1]) & check(a1, hp[2]) & check(a2, hp[3]);
    for (lib, hp) in sigma_from_gap(5, 1.0 / 3.0).iter().zip(sigma_hp(5, 1, 3)) {
        ok &= check(*lib, hp);
    }
    // m0 on the doubled equilateral triangle and on a square pillowcase.
    let m0_eq = m0_constant(0, 3, &doubled_equilateral().curvatures());
    let m0_sq = m0_constant(0, 4, &[0.5; 4]);
    ok &= m0_eq as i64 == m0_exact(3, &[(2, 3); 3]) && m0_sq as i64 == m0_exact(4, &[(1, 2); 4]);
    report(
        4,
        "constant formulas",
        ok,
        format!("c1 = {c1:.12e}, c2 = {c2:.12e}, a1 = {a1:.12e}, a2 = {a2:.12e}, m0 = {m0_eq}/{m0_sq}, worst relative error {worst:.1e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_05_sandwich() {
    let t0 = Instant::now();
    let all = surfaces();
    let mut rows = 0;
    let mut closed = 0;
    let mut violations = 0;
    for s in &all {
        let rep = verify_bounds(s, 5.0).unwrap();
        rows += rep.rows.len();
        closed += rep.rows.iter().filter(|r| r.closed_ok.is_some()).count();
        violations += rep.violations().count();
    }
    let dt = t0.elapsed();
    let pass = violations == 0 && dt < Duration::from_secs(300);
    report(5, "sandwich bounds", pass, format!("{rows} geodesics ({closed} cylinders) on {} surfaces, {violations} violations, {dt:.2?}", all.len()));
    assert!(pass);
}

fn run_designated(ex: &Example) -> Trajectory {
    let d: &DesignatedTrajectory = &ex.trajectory;
    let s = &ex.surface;
    match d.corner {
        Some(i) => {
            let v = s.vertex(d.face, i);
            trace_from_cone(s, v, s.absolute_angle(d.face, i, d.direction), d.budget).unwrap()
        }
        None => trace(s, Start::Point(SurfacePoint { face: d.face, point: d.point }), d.direction, d.budget).unwrap(),
    }
}

#[test]
fn criterion_06_witnesses() {
    let mut notes = Vec::new();
    // (a) b2: iota 1 and length sqrt3 x shrinking to zero.
    let xs: Vec<f64> = (1..=10).map(|i| 0.5f64.powi(i)).collect();
    let mut a_ok = true;
    let mut lens = Vec::new();
    for &x in &xs {
        let ex = b2_witness(x).unwrap();
        let t = run_designated(&ex);
        let iota = self_intersection_number(&ex.surface, &t).unwrap();
        a_ok &= iota == 1 && (t.length - 3f64.sqrt() * x).abs() < FORMULA_TOL;
        lens.push(t.length);
    }
    a_ok &= lens.windows(2).all(|w| w[1] < w[0]) && *lens.last().unwrap() < 1e-2;
    notes.push(format!("(a) {}", if a_ok { "ok" } else { "fail" }));
    // (b) delta witness: chord length and area.
    let mut b_ok = true;
    let mut b_worst: f64 = 0.0;
    for i in 1..=10 {
        let theta = PI / 6.0 * i as f64 / 11.0;
        let m = 1 + (i % 3);
        let ex = delta_witness(theta, m).unwrap();
        let t = run_designated(&ex);
        let len = 2.0 * (m as f64 * theta / 2.0).sin();
        let area_err = (ex.surface.area() - delta_witness_stated_area(theta)).abs();
        b_worst = b_worst.max(area_err).max((t.length - len).abs());
        b_ok &= (t.length - len).abs() < FORMULA_TOL && area_err < FORMULA_TOL && t.end.cone_vertex().is_some();
    }
    notes.push(format!("(b) {} (worst error {b_worst:.1e})", if b_ok { "ok" } else { "fail" }));
    // (c) fagnano cut: closed geodesic of length 3t, and the stated area.
    let mut c_len_ok = true;
    let mut c_area_worst: f64 = 0.0;
    for i in 1..=10 {
        let tt = i as f64 / 11.0;
        let ex = fagnano_cut(tt).unwrap();
        let t = run_designated(&ex);
        c_len_ok &= t.closed && (t.length - 3.0 * tt).abs() < FORMULA_TOL;
        c_area_worst = c_area_worst.max((ex.surface.area() - fagnano_cut_stated_area(tt)).abs());
    }
    let c_ok = c_len_ok && c_area_worst < FORMULA_TOL;
    notes.push(format!(
        "(c) length {}, area {} (worst area gap {c_area_worst:.3})",
        if c_len_ok { "ok" } else { "fail" },
        if c_area_worst < FORMULA_TOL { "ok" } else { "fail" }
    ));
    // (d) c2 witness: iota 1 and length sqrt3 t.
    let mut d_ok = true;
    for i in 1..=10 {
        let tt = i as f64 / 11.0;
        let ex = c2_witness(tt).unwrap();
        let t = run_designated(&ex);
        let iota = self_intersection_number(&ex.surface, &t).unwrap();
        d_ok &= iota == 1 && (t.length - 3f64.sqrt() * tt).abs() < FORMULA_TOL && t.end.cone_vertex().is_some();
    }
    notes.push(format!("(d) {}", if d_ok { "ok" } else { "fail" }));
    let pass = a_ok && b_ok && c_ok && d_ok;
    report(6, "counterexample witnesses", pass, notes.join("; "));
    assert!(pass);
}

#[test]
fn criterion_07_corner_switch() {
    let all = surfaces();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let mut windows = 0;
    let mut violations = 0;
    for k in 0..100 {
        let s = &all[k % all.len()];
        let tri = delaunay_triangulation(s).unwrap();
        let c = tri.complex();
        let m0 = m0_constant(0, s.n(), &s.curvatures());
        let width = tri.width();
        let mut budget = (m0 + 2) as f64 * width;
        let t = loop {
            let t = loop {
                match random_trajectory(&mut rng, c, budget) {
                    Ok(t) => break t,
                    Err(TraceError::VertexGrazing { .. }) => continue,
                    Err(e) => panic!("{e}"),
                }
            };
            if t.threads.len() >= m0 + 2 {
                break t;
            }
            budget *= 2.0;
        };
        windows += t.threads.len() - m0 - 1;
        violations += corner_switch_windows(c, &t, m0, width).len();
    }
    let pass = violations == 0;
    report(7, "corner-switch lemma", pass, format!("{windows} windows on 100 trajectories, {violations} violations"));
    assert!(pass);
}

#[test]
fn criterion_08_surgery() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let (mut book, mut area, mut drift, mut order) = (0, 0, 0, 0);
    let (mut worst_area, mut worst_drift, mut worst_order): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut checks = 0;
    for i in 0..50 {
        let kind = if i % 2 == 0 { HullKind::Triangle } else { HullKind::Diagonal };
        let ph = random_polygon_hull(&mut rng, kind).unwrap();
        let s = &ph.surface;
        let r = generalized_surgery(s, &[ph.hull.clone()]).unwrap();
        // Collapsed curvature vector: the untouched points, then the cluster's sum.
        let mut expect: Vec<f64> = s.cone_points.iter().filter(|c| !ph.hull.cluster.contains(&c.label)).map(|c| c.curvature).collect();
        let merged: f64 = s.cone_points.iter().filter(|c| ph.hull.cluster.contains(&c.label)).map(|c| c.curvature).sum();
        expect.push(merged);
        let mut got = r.top.curvatures();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let v = validate(&r.top);
        if got.len() != expect.len() || got.iter().zip(&expect).any(|(a, b)| (a - b).abs() > 1e-9) || v.gauss_bonnet_residual >= 1e-9 {
            book += 1;
        }
        let gain: f64 = r.added_cones.iter().map(|c| c.area).sum::<f64>() - r.hull_areas.iter().sum::<f64>();
        let err = (s.area() - (r.top.area() - gain)).abs();
        worst_area = worst_area.max(err);
        if err > AREA_IDENTITY_TOL {
            area += 1;
        }
        let spots = r.spot_check(s, &mut rng, 20, 1e-3);
        checks += spots.len();
        let d = spots.iter().map(|x| x.drift).fold(0.0, f64::max);
        worst_drift = worst_drift.max(d);
        if spots.len() < 20 || d >= DRIFT_TOL {
            drift += 1;
        }
        let v = &ph.vertices;
        let orders: Vec<Vec<usize>> = if v.len() == 3 {
            vec![vec![v[0], v[1], v[2]], vec![v[1], v[2], v[0]], vec![v[2], v[0], v[1]]]
        } else {
            vec![vec![v[0], v[1]], vec![v[1], v[0]]]
        };
        let fr = 1.0;
        let f0 = fingerprint(&r.top, fr).unwrap();
        for o in &orders {
            let seq = collapse_in_order(s, &ph.hull, o, 3.0 * ph.hull.perimeter()).unwrap();
            let dist = f0.distance(&fingerprint(&seq, fr).unwrap(), fr);
            worst_order = worst_order.max(dist);
            if dist >= ORDER_TOL {
                order += 1;
            }
        }
    }
    let pass = book + area + drift + order == 0;
    report(
        8,
        "surgery",
        pass,
        format!(
            "50 hulls: bookkeeping {book}, area identity {area} (worst {worst_area:.1e}), isometry {drift} ({checks} spot checks, worst drift {worst_drift:.1e}), order {order} (worst {worst_order:.1e}) failures"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_infinite_spheres() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut bad = 0;
    let mut counts = Vec::new();
    for i in 0..20 {
        let n = 3 + i % 3;
        let x = random_infinite_sphere(&mut rng, n, 0.1);
        let (c, _) = count_saddle_connections_infinite(&x).unwrap();
        if c.cap_hit || !c.pass || c.delta < 0.1 || c.n != n {
            bad += 1;
        }
        counts.push(c.count);
    }
    let dt = t0.elapsed();
    let pass = bad == 0 && dt < Duration::from_secs(120);
    report(9, "infinite-sphere finiteness", pass, format!("20 spheres, {bad} failures, counts {counts:?}, {dt:.2?}"));
    assert!(pass);
}

#[test]
fn criterion_10_counting_bounds() {
    let grid: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
    let rmax = *grid.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut problems = Vec::new();
    let mut points = 0;
    let mut fixtures = 0;
    for i in 0..12 {
        let p = random_convex_polygon(&mut rng, 3 + i % 4);
        let s = flatsphere::fixtures::doubled_polygon_surface(&p).normalized();
        let k = s.curvatures();
        let (n, delta) = (k.len(), curvature_gap(&k));
        let tri = delaunay_triangulation(&s).unwrap();
        let scs = enumerate_with_triangulation(&tri, rmax).unwrap().connections;
        let cyl = cylinders_from_connections(tri.complex(), &scs, rmax).unwrap();
        let table = count_table(&scs, &cyl, &grid);
        // Billiard counts on the area-one polygon itself.
        let diags = enumerate_generalized_diagonals(&p, rmax).unwrap();
        let fams = enumerate_periodic_families(&p, rmax).unwrap();
        let mut prev = (0, 0, 0, 0);
        for (row, &r) in table.iter().zip(&grid) {
            let nd = diags.iter().filter(|d| d.length() <= r).count();
            let np = fams.iter().filter(|f| f.length <= r).count();
            let cur = (row.n_sc, row.n_cg, nd, np);
            if cur.0 < prev.0 || cur.1 < prev.1 || cur.2 < prev.2 || cur.3 < prev.3 {
                problems.push(format!("fixture {i}: count decreases at R = {r}"));
            }
            if row.n_cg > row.n_sc {
                problems.push(format!("fixture {i}: N_cg > N_sc at R = {r}"));
            }
            let sc_ok = count_within(row.n_sc, log2_sc_bound(n, delta, r).unwrap());
            let diag_ok = count_within(nd, log2_diag_bound(n, delta, r).unwrap());
            let per_ok = count_within(np, log2_per_bound(n, delta, r).unwrap());
            if !(sc_ok && diag_ok && per_ok) {
                problems.push(format!("fixture {i}: exponential bound fails at R = {r}"));
            }
            prev = cur;
            points += 1;
        }
        fixtures += 1;
    }
    let pass = problems.is_empty();
    report(
        10,
        "counting bounds",
        pass,
        format!("{fixtures} fixtures x {} radii = {points} grid points, {} problems {:?}", grid.len(), problems.len(), problems.iter().take(3).collect::<Vec<_>>()),
    );
    assert!(pass);
}
