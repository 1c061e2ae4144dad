use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensopt_core::constraints::{
    build_raw_system, build_reduced_system, eliminate_all, fm_eliminate, lift_point, rat, systems_equivalent,
    BufferSpec, ConstraintSystem, LinIneq, Pruning, Rational,
};

fn raw_vars(sys: &ConstraintSystem) -> Vec<String> {
    sys.variables.iter().filter(|v| v.starts_with("R_")).cloned().collect()
}

fn reduce(n: usize, d: usize, buffer: BufferSpec) -> ConstraintSystem {
    let raw = build_raw_system(n, d, buffer).unwrap();
    let vars = raw_vars(&raw);
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    eliminate_all(&raw, &refs, Pruning::Lp).unwrap()
}

fn rows(sys: &ConstraintSystem) -> BTreeSet<String> {
    sys.canonical_rows()
}

#[test]
fn appendix_elimination_chain() {
    let raw = build_raw_system(3, 2, BufferSpec::Symbolic).unwrap();
    let out = eliminate_all(&raw, &["R_1_1", "R_1_2", "R_2_2", "R_2_3", "R_3_3"], Pruning::Lp).unwrap();
    let expected = [
        LinIneq::int(&[("r_3", 1), ("c_3", -1)], 0),
        LinIneq::int(&[("r_2", 1), ("r_3", 1), ("c_2", -1), ("c_3", -1)], 0),
        LinIneq::int(&[("r_1", 1), ("r_2", 1), ("r_3", 1), ("c_1", -1), ("c_2", -1), ("c_3", -1)], 0),
        LinIneq::int(&[("r_1", 1), ("c_1", -1), ("c_2", -1)], 0),
        LinIneq::int(&[("r_1", 1), ("r_2", 1), ("c_1", -1), ("B", -1)], 0),
        LinIneq::int(&[("r_1", 1), ("r_2", 1), ("r_3", 1), ("c_1", -1), ("c_2", -1), ("B", -1)], 0),
        LinIneq::int(&[("r_2", 1), ("r_3", 1), ("c_2", -1), ("B", -1)], 0),
        LinIneq::int(&[("r_1", 1), ("B", -1)], 0),
        LinIneq::int(&[("r_2", 1), ("B", -1)], 0),
        LinIneq::int(&[("r_3", 1), ("B", -1)], 0),
    ];
    let mut want = ConstraintSystem::new(out.variables.clone()).all_nonneg();
    for q in expected {
        want.push(q).unwrap();
    }
    assert_eq!(rows(&out), rows(&want));

    let reduced = build_reduced_system(3, 2, BufferSpec::Symbolic).unwrap();
    assert_eq!(rows(&reduced), rows(&want));
    let eq = systems_equivalent(&out, &reduced, 200, 7).unwrap();
    assert!(eq.equivalent, "{:?}", eq.witness);
}

#[test]
fn reduced_matches_projection_for_small_horizons() {
    for n in 1..=4 {
        for d in 1..=n {
            for buffer in [BufferSpec::Infinite, BufferSpec::Symbolic, BufferSpec::Finite(Rational::new(3.into(), 8.into()))] {
                let projected = reduce(n, d, buffer.clone());
                let reduced = build_reduced_system(n, d, buffer.clone()).unwrap();
                let eq = systems_equivalent(&projected, &reduced, 100, (n * 10 + d) as u64).unwrap();
                assert!(eq.equivalent, "N={n} d={d} {buffer:?}: {:?}", eq.witness);
            }
        }
    }
}

#[test]
fn syntactic_only_projection_is_also_exact() {
    let raw = build_raw_system(3, 2, BufferSpec::Symbolic).unwrap();
    let vars = raw_vars(&raw);
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let loose = eliminate_all(&raw, &refs, Pruning::Syntactic).unwrap();
    let tight = eliminate_all(&raw, &refs, Pruning::Lp).unwrap();
    assert!(loose.len() >= tight.len());
    assert!(systems_equivalent(&loose, &tight, 100, 3).unwrap().equivalent);
}

#[test]
fn two_slot_strict_delay_matches_reduced() {
    let projected = reduce(2, 1, BufferSpec::Symbolic);
    let reduced = build_reduced_system(2, 1, BufferSpec::Symbolic).unwrap();
    assert!(systems_equivalent(&projected, &reduced, 100, 11).unwrap().equivalent);
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn random_system(rng: &mut ChaCha8Rng) -> ConstraintSystem {
    let names = ["x1", "x2", "x3", "x4"];
    let mut sys = ConstraintSystem::new(names.iter().map(|s| s.to_string()).collect()).all_nonneg();
    for _ in 0..6 {
        let terms: Vec<(&str, i64)> = names.iter().map(|v| (*v, rng.gen_range(-3..=3))).collect();
        sys.push(LinIneq::int(&terms, rng.gen_range(0..=6))).unwrap();
    }
    // keep the polytope bounded so the grids cover it
    for v in names {
        sys.push(LinIneq::int(&[(v, 1)], 3)).unwrap();
    }
    sys
}

#[test]
fn random_projection_against_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10 {
        let sys = random_system(&mut rng);
        let proj = fm_eliminate(&sys, "x4", Pruning::Lp).unwrap();
        let step = q(1, 2);
        let fine = q(1, 16);
        let mut x = [rat(0), rat(0), rat(0)];
        let grid = |k: i64, s: &Rational| s * rat(k);
        for a in 0..=6 {
            for b in 0..=6 {
                for c in 0..=6 {
                    x[0] = grid(a, &step);
                    x[1] = grid(b, &step);
                    x[2] = grid(c, &step);
                    let mut p: BTreeMap<String, Rational> =
                        ["x1", "x2", "x3"].iter().map(|s| s.to_string()).zip(x.iter().cloned()).collect();
                    let in_proj = proj.contains(&p);
                    let mut found = false;
                    for k in 0..=48 {
                        p.insert("x4".into(), grid(k, &fine));
                        if sys.contains(&p) {
                            found = true;
                            break;
                        }
                    }
                    p.remove("x4");
                    // a grid witness proves membership in the projection
                    if found {
                        assert!(in_proj, "grid point {p:?} lifts but is outside the projection");
                    }
                    // every projected point lifts exactly
                    if in_proj {
                        let t = lift_point(&sys, "x4", &p).expect("projection point must lift");
                        p.insert("x4".into(), t);
                        assert!(sys.contains(&p));
                    }
                }
            }
        }
    }
}
