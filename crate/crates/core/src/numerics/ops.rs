//! Value-level entry points and the GRU recurrence built from graph ops.

use super::graph::{cosine_slice, softmax_slice, Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Cosine similarity of two equally long vectors. The norm product in the
/// denominator is floored at [`COSINE_EPS`](super::graph::COSINE_EPS).
pub fn cosine_similarity(u: &Tensor, v: &Tensor) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::invalid(format!(
            "cosine_similarity: lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(cosine_slice(u.data(), v.data()))
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::invalid("softmax: empty input"));
    }
    Ok(Tensor::vector(softmax_slice(x.data())))
}

/// Graph handles for one GRU layer's parameters.
///
/// `w_*` are `[hidden, input]`, `u_*` are `[hidden, hidden]`, `b_*` are `[hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct GruNodes {
    pub w_z: NodeId,
    pub u_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub u_r: NodeId,
    pub b_r: NodeId,
    pub w_h: NodeId,
    pub u_h: NodeId,
    pub b_h: NodeId,
}

/// One GRU step:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
pub fn gru_cell(g: &mut Graph, x: NodeId, h: NodeId, p: &GruNodes) -> Result<NodeId> {
    let gate = |g: &mut Graph, w, u, b, hin| -> Result<NodeId> {
        let wx = g.matvec(w, x)?;
        let uh = g.matvec(u, hin)?;
        let s = g.add(wx, uh)?;
        g.add(s, b)
    };
    let z_pre = gate(g, p.w_z, p.u_z, p.b_z, h)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.w_r, p.u_r, p.b_r, h)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h)?;
    let c_pre = gate(g, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = g.tanh(c_pre);
    let keep = g.one_minus(z);
    let old = g.mul(keep, h)?;
    let new = g.mul(z, cand)?;
    g.add(old, new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn cosine_examples() {
        let u = Tensor::vector(vec![1.0, 2.0]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-9);
        let a = Tensor::vector(vec![1.0, 0.0]);
        let b = Tensor::vector(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert!(cosine_similarity(&a, &Tensor::vector(vec![1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn cosine_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = rand_vec(&mut rng, 8);
            let v = rand_vec(&mut rng, 8);
            let mut d = 0.0;
            let mut nu = 0.0;
            let mut nv = 0.0;
            for i in 0..8 {
                d += u[i] * v[i];
                nu += u[i] * u[i];
                nv += v[i] * v[i];
            }
            let expected = d / (nu.sqrt() * nv.sqrt()).max(1e-8);
            let got = cosine_similarity(&Tensor::vector(u), &Tensor::vector(v)).unwrap();
            assert!((got - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_examples() {
        let y = softmax(&Tensor::vector(vec![0.0; 4])).unwrap();
        for p in y.data() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let y = softmax(&Tensor::vector(vec![1000.0, 0.0])).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1].abs() < 1e-12);
        assert!(y.is_finite());
        let empty = Tensor::new(vec![1], vec![0.0]).unwrap();
        assert!(softmax(&empty).is_ok());
    }

    struct Gru {
        w: [Vec<f64>; 3],
        u: [Vec<f64>; 3],
        b: [Vec<f64>; 3],
    }

    fn build(g: &mut Graph, p: &Gru, i: usize, h: usize) -> GruNodes {
        let m = |g: &mut Graph, d: &Vec<f64>, r, c| g.constant(Tensor::matrix(r, c, d.clone()).unwrap());
        let v = |g: &mut Graph, d: &Vec<f64>| g.constant(Tensor::vector(d.clone()));
        GruNodes {
            w_z: m(g, &p.w[0], h, i),
            u_z: m(g, &p.u[0], h, h),
            b_z: v(g, &p.b[0]),
            w_r: m(g, &p.w[1], h, i),
            u_r: m(g, &p.u[1], h, h),
            b_r: v(g, &p.b[1]),
            w_h: m(g, &p.w[2], h, i),
            u_h: m(g, &p.u[2], h, h),
            b_h: v(g, &p.b[2]),
        }
    }

    fn run(p: &Gru, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let nodes = build(&mut g, p, x.len(), h.len());
        let xn = g.constant(Tensor::vector(x.to_vec()));
        let hn = g.constant(Tensor::vector(h.to_vec()));
        let out = gru_cell(&mut g, xn, hn, &nodes).unwrap();
        g.value(out).data().to_vec()
    }

    fn zeros(i: usize, h: usize) -> Gru {
        Gru {
            w: [vec![0.0; h * i], vec![0.0; h * i], vec![0.0; h * i]],
            u: [vec![0.0; h * h], vec![0.0; h * h], vec![0.0; h * h]],
            b: [vec![0.0; h], vec![0.0; h], vec![0.0; h]],
        }
    }

    #[test]
    fn gru_zero_params_halve_state() {
        let out = run(&zeros(3, 2), &[0.3, -7.0, 2.0], &[1.0, -2.0]);
        assert_eq!(out, vec![0.5, -1.0]);
    }

    #[test]
    fn gru_saturated_update_gate() {
        let mut p = zeros(2, 3);
        p.b[0] = vec![40.0; 3];
        let out = run(&p, &[0.5, 0.5], &[1.0, -3.0, 2.0]);
        for v in out {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn gru_matches_scalar_recurrence() {
        let (ni, nh) = (4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Gru {
            w: [rand_vec(&mut rng, nh * ni), rand_vec(&mut rng, nh * ni), rand_vec(&mut rng, nh * ni)],
            u: [rand_vec(&mut rng, nh * nh), rand_vec(&mut rng, nh * nh), rand_vec(&mut rng, nh * nh)],
            b: [rand_vec(&mut rng, nh), rand_vec(&mut rng, nh), rand_vec(&mut rng, nh)],
        };
        let x = rand_vec(&mut rng, ni);
        let h = rand_vec(&mut rng, nh);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut z = vec![0.0; nh];
        let mut r = vec![0.0; nh];
        for k in 0..nh {
            let mut sz = p.b[0][k];
            let mut sr = p.b[1][k];
            for j in 0..ni {
                sz += p.w[0][k * ni + j] * x[j];
                sr += p.w[1][k * ni + j] * x[j];
            }
            for j in 0..nh {
                sz += p.u[0][k * nh + j] * h[j];
                sr += p.u[1][k * nh + j] * h[j];
            }
            z[k] = sig(sz);
            r[k] = sig(sr);
        }
        let mut expected = vec![0.0; nh];
        for k in 0..nh {
            let mut s = p.b[2][k];
            for j in 0..ni {
                s += p.w[2][k * ni + j] * x[j];
            }
            for j in 0..nh {
                s += p.u[2][k * nh + j] * r[j] * h[j];
            }
            expected[k] = (1.0 - z[k]) * h[k] + z[k] * s.tanh();
        }
        let got = run(&p, &x, &h);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
