mod common;

use std::collections::HashSet;

use common::*;
use nailfem::mesh::{Domain, MarkedSet, Triangulation};
use proptest::prelude::*;

fn min_angle(m: &Triangulation) -> f64 {
    (0..m.n_triangles()).map(|t| m.min_angle(t)).fold(f64::INFINITY, f64::min)
}

/// Smallest angle over the first two bisection generations of `T_0`.
fn angle_bound(m0: &Triangulation) -> f64 {
    let m1 = m0.uniform_refine().unwrap();
    let m2 = m1.uniform_refine().unwrap();
    min_angle(m0).min(min_angle(&m1)).min(min_angle(&m2))
}

/// Fine mesh invariants relative to the mesh it was refined from.
fn check_refinement(coarse: &Triangulation, fine: &Triangulation, marked: &MarkedSet) {
    fine.check_conforming().unwrap();
    for t in 0..fine.n_triangles() {
        assert!(fine.area(t) > 0.0);
    }
    let total = |m: &Triangulation| (0..m.n_triangles()).map(|t| m.area(t)).sum::<f64>();
    assert!((total(coarse) - total(fine)).abs() < 1e-12);
    if !marked.is_empty() {
        assert!(fine.n_triangles() > coarse.n_triangles());
    }

    // Vertices: the coarse ones unchanged, new ones at coarse edge midpoints.
    let nv = coarse.n_vertices();
    assert_eq!(&fine.vertices()[..nv], coarse.vertices());
    let mids: HashSet<[u64; 2]> = coarse
        .edges()
        .iter()
        .map(|&[a, b]| {
            let (p, q) = (coarse.vertex(a), coarse.vertex(b));
            [(0.5 * (p[0] + q[0])).to_bits(), (0.5 * (p[1] + q[1])).to_bits()]
        })
        .collect();
    for p in &fine.vertices()[nv..] {
        assert!(mids.contains(&[p[0].to_bits(), p[1].to_bits()]));
    }

    // Parents: children lie inside and halve the area per generation.
    let mut refined = vec![false; coarse.n_triangles()];
    for t in 0..fine.n_triangles() {
        let p = fine.parent(t).expect("refined meshes carry parent links");
        let dg = fine.generation(t) - coarse.generation(p);
        assert!(dg <= 2);
        refined[p] |= dg > 0;
        let ratio = coarse.area(p) / fine.area(t);
        assert!((ratio - f64::from(1u32 << dg)).abs() < 1e-9);
        let c = fine.corners(t);
        let centroid = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        assert!(coarse.barycentric(p, centroid).iter().all(|&l| l > -1e-12));
        assert_eq!(fine.root(t), coarse.root(p));
    }
    for &t in marked.indices() {
        assert!(refined[t], "marked element {t} not bisected");
    }
}

#[test]
fn examples() {
    let l = Triangulation::initial(&Domain::LShape).unwrap();
    assert_eq!((l.n_triangles(), l.n_vertices()), (12, 13));
    let sq = Triangulation::initial(&Domain::UnitSquare).unwrap();
    assert_eq!((sq.n_triangles(), sq.n_vertices()), (2, 4));
    assert_eq!(sq.refine(&MarkedSet::empty()).unwrap().triangles(), sq.triangles());
    assert_eq!(sq.refine(&MarkedSet::new(vec![0], 2).unwrap()).unwrap().n_triangles(), 4);
    assert_eq!(sq.uniform_refine().unwrap().n_triangles(), 4);
}

#[test]
fn file_round_trip() {
    let dir = std::env::temp_dir().join(format!("nailfem-mesh-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("l.txt");
    let m = refined(&Domain::LShape, 3);
    m.write(&path).unwrap();
    let back = Triangulation::initial(&Domain::File(path)).unwrap();
    assert_eq!(back.vertices(), m.vertices());
    assert_eq!(back.triangles(), m.triangles());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn geometry_closes_for_every_element() {
    let m = refined(&Domain::LShape, 4);
    for t in 0..m.n_triangles() {
        let g = m.element_geometry(t);
        let s = g.edges.iter().fold([0.0, 0.0], |s, e| [s[0] + e.length * e.normal[0], s[1] + e.length * e.normal[1]]);
        assert!(s[0].abs() < 1e-14 && s[1].abs() < 1e-14);
        for e in &g.edges {
            assert!((e.normal[0].hypot(e.normal[1]) - 1.0).abs() < 1e-14);
            if let Some(n) = e.neighbor {
                assert!(m.triangle_edges(n).iter().any(|&k| m.triangle_edges(t).contains(&k)));
            }
        }
    }
}

#[test]
fn uniform_refinement_keeps_shape_classes() {
    let m0 = Triangulation::initial(&Domain::LShape).unwrap();
    let bound = angle_bound(&m0);
    let mut m = m0;
    for _ in 0..8 {
        let fine = m.uniform_refine().unwrap();
        check_refinement(&m, &fine, &MarkedSet::all(m.n_triangles()));
        assert!(min_angle(&fine) >= bound - 1e-12);
        m = fine;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_marking_sequences(depth in 1usize..=6, seed in any::<u64>(), fraction in 0.0f64..0.4) {
        let m0 = Triangulation::initial(&Domain::LShape).unwrap();
        let bound = angle_bound(&m0);
        let mut g = rng(seed);
        let mut m = m0.clone();
        let mut marked_total = 0;
        for _ in 0..depth {
            let n = m.n_triangles();
            let mut idx: Vec<usize> = (0..n).filter(|_| rand::Rng::gen_bool(&mut g, fraction)).collect();
            if idx.is_empty() {
                idx.push(rand::Rng::gen_range(&mut g, 0..n));
            }
            let marked = MarkedSet::new(idx, n).unwrap();
            marked_total += marked.len();
            let fine = m.refine(&marked).unwrap();
            check_refinement(&m, &fine, &marked);
            prop_assert!(min_angle(&fine) >= bound - 1e-12);
            m = fine;
        }
        let ratio = (m.n_triangles() - m0.n_triangles()) as f64 / marked_total as f64;
        prop_assert!(ratio <= 20.0, "closure ratio {}", ratio);
    }
}
