use forceskill_core::manifold::{
    clamp_eigenvalues, gaussian_product, Frame, Geometry, ManifoldGaussian, Matrix, Pose, Vector,
};
use forceskill_core::stiffness::psd_project;
use forceskill_core::tphsmm::DurationModel;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;

fn quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("nonzero", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-2)
        .prop_map(|[w, x, y, z]| UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)))
}

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-2.0f64..2.0), quat()).prop_map(|(p, q)| Pose::new(Vector3::from(p), q))
}

fn frame() -> impl Strategy<Value = Frame> {
    (quat(), prop::array::uniform3(-1.0f64..1.0)).prop_map(|(q, t)| Frame::new(q, Vector3::from(t)))
}

/// Tangent vectors whose rotation part stays inside the injectivity radius.
fn tangent() -> impl Strategy<Value = Vector> {
    (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-1.0f64..1.0)).prop_map(|(l, a)| {
        let mut w = Vector3::from(a);
        if w.norm() > 3.0 {
            w *= 3.0 / w.norm();
        }
        Vector::from_vec(vec![l[0], l[1], l[2], w.x, w.y, w.z])
    })
}

fn spd(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let a = Matrix::from_vec(n, n, v);
        &a * a.transpose() + Matrix::identity(n, n) * 0.1
    })
}

fn close(a: &Vector, b: &Vector, tol: f64) -> bool {
    (a - b).amax() <= tol
}

proptest! {
    #[test]
    fn log_inverts_exp(base in pose(), v in tangent()) {
        let g = Geometry::Pose;
        let x = base.to_point();
        let back = g.log(&g.exp(&v, &x), &x);
        prop_assert!(close(&back, &v, 1e-9), "{back} vs {v}");
    }

    #[test]
    fn exp_inverts_log(a in pose(), b in pose()) {
        let g = Geometry::Pose;
        let (a, b) = (a.to_point(), b.to_point());
        let back = g.exp(&g.log(&a, &b), &b);
        prop_assert!(g.distance(&back, &a) < 1e-9);
    }

    #[test]
    fn normalized_quaternion_is_canonical(p in pose()) {
        let g = Geometry::Pose;
        let mut v = p.to_point();
        for i in 3..7 {
            v[i] = -v[i];
        }
        let n = g.normalize(&v);
        prop_assert!(n[3] >= 0.0);
        prop_assert!(g.distance(&n, &p.to_point()) < 1e-12);
    }

    #[test]
    fn frame_unapply_inverts_apply(f in frame(), p in pose()) {
        let g = Geometry::Pose;
        let x = p.to_point();
        let back = g.frame_unapply(&f, &g.frame_apply(&f, &x));
        prop_assert!(g.distance(&back, &x) < 1e-12);
    }

    #[test]
    fn psd_projection_is_symmetric_psd_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 36)) {
        let m = Matrix::from_vec(6, 6, v);
        let p = psd_project(&m);
        prop_assert!((&p - p.transpose()).amax() < 1e-12);
        prop_assert!(p.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
        let again = psd_project(&p);
        prop_assert!((&again - &p).amax() < 1e-9);
    }

    #[test]
    fn eigenvalue_clamp_respects_floor(c in spd(4), floor in 0.01f64..2.0) {
        let r = clamp_eigenvalues(&c, floor);
        prop_assert!(r.clone().symmetric_eigen().eigenvalues.min() >= floor - 1e-10);
        // directions already above the floor are kept
        let big = clamp_eigenvalues(&c, 1e-12);
        prop_assert!((&big - &c).amax() < 1e-10);
    }

    #[test]
    fn gaussian_product_is_frame_equivariant(
        f in frame(),
        m1 in pose(), m2 in pose(),
        c1 in spd(6), c2 in spd(6),
    ) {
        let g = Geometry::Pose;
        let gs = [ManifoldGaussian::new(m1.to_point(), c1), ManifoldGaussian::new(m2.to_point(), c2)];
        let local = gaussian_product(&g, &gs).unwrap();
        let moved: Vec<_> = gs.iter().map(|x| g.gaussian_apply(&f, x)).collect();
        let global = gaussian_product(&g, &moved).unwrap();
        let expect = g.gaussian_apply(&f, &local);
        prop_assert!(g.distance(&global.mean, &expect.mean) < 1e-7);
        prop_assert!((&global.cov - &expect.cov).amax() < 1e-6 * (1.0 + expect.cov.amax()));
    }

    #[test]
    fn euclidean_product_matches_information_form(
        m1 in prop::array::uniform3(-3.0f64..3.0),
        m2 in prop::array::uniform3(-3.0f64..3.0),
        c1 in spd(3), c2 in spd(3),
    ) {
        let g = Geometry::Euclidean(3);
        let (m1, m2) = (Vector::from_column_slice(&m1), Vector::from_column_slice(&m2));
        let p = gaussian_product(&g, &[ManifoldGaussian::new(m1.clone(), c1.clone()), ManifoldGaussian::new(m2.clone(), c2.clone())]).unwrap();
        let (l1, l2) = (c1.try_inverse().unwrap(), c2.try_inverse().unwrap());
        let cov = (&l1 + &l2).try_inverse().unwrap();
        let mean = &cov * (&l1 * m1 + &l2 * m2);
        prop_assert!(close(&p.mean, &mean, 1e-8));
        prop_assert!((&p.cov - &cov).amax() < 1e-8);
    }

    #[test]
    fn duration_density_is_symmetric(mean in 1.0f64..50.0, std in 0.5f64..10.0, d in 0usize..20) {
        let m = DurationModel::new(mean.round(), std);
        let c = mean.round() as usize;
        prop_assume!(d <= c);
        let below = m.log_prob(c - d);
        let above = m.log_prob(c + d);
        prop_assert!((below - above).abs() < 1e-12);
        prop_assert!(below <= m.log_prob(c));
    }
}
