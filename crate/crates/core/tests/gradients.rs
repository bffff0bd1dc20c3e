use dido_core::dido::{dido_loss, one_hot};
use dido_core::diffkit::{grad_check, Graph, Tensor, Var};
use dido_core::distloss::{gaussian_nll, ggau_nll, laplace_nll, mse_loss, nig_nll, LAMBDA_NIG};
use dido_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POINTS: usize = 50;
const H: f64 = 1e-5;

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::column((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

fn positive(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::column((0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

fn worst_over_points(
    seed: u64,
    sample: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var> + Copy,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..POINTS)
        .map(|_| grad_check(f, &sample(&mut rng), H).unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn mse() {
    let e = worst_over_points(1, |r| vec![normal(r, 6), normal(r, 6)], |g, v| mse_loss(g, v[0], v[1]));
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn gaussian() {
    let e = worst_over_points(
        2,
        |r| vec![positive(r, 6, 0.2, 4.0), normal(r, 6)],
        |g, v| gaussian_nll(g, v[0], v[1]),
    );
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn laplace() {
    let e = worst_over_points(
        3,
        |r| vec![positive(r, 6, 0.2, 4.0), normal(r, 6)],
        |g, v| laplace_nll(g, v[0], v[1]),
    );
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn generalized_gaussian() {
    let e = worst_over_points(
        4,
        |r| vec![positive(r, 6, 0.3, 3.0), positive(r, 6, 0.5, 4.0), normal(r, 6)],
        |g, v| ggau_nll(g, v[0], v[1], v[2]),
    );
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn normal_inverse_gamma() {
    let e = worst_over_points(
        5,
        |r| {
            vec![
                positive(r, 6, 0.2, 3.0),
                positive(r, 6, 1.1, 4.0),
                positive(r, 6, 0.2, 3.0),
                normal(r, 6),
            ]
        },
        |g, v| nig_nll(g, v[0], v[1], v[2], v[3], LAMBDA_NIG),
    );
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn dirichlet_loss() {
    let targets = one_hot(&[0, 3, 1, 4], 5);
    for lambda in [0.0, 0.001, 0.5] {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst = 0.0_f64;
        for _ in 0..POINTS {
            let e = Tensor::matrix(4, 5, (0..20).map(|_| rng.gen_range(0.05..6.0)).collect()).unwrap();
            let err = grad_check(
                |g, v| {
                    let t = g.constant(targets.clone());
                    dido_loss(g, v[0], t, lambda)
                },
                &[e],
                H,
            )
            .unwrap();
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "lambda {lambda}: {worst:e}");
    }
}

#[test]
fn dirichlet_loss_at_zero_evidence() {
    // one-sided region: probe just inside the domain
    let e = Tensor::matrix(1, 2, vec![1e-4, 1e-4]).unwrap();
    let err = grad_check(
        |g, v| {
            let t = g.constant(one_hot(&[1], 2));
            dido_loss(g, v[0], t, 0.0)
        },
        &[e],
        H / 10.0,
    )
    .unwrap();
    assert!(err < 1e-5, "{err:e}");
}

type Unary = fn(&mut Graph, Var) -> Result<Var>;

#[test]
fn primitives_at_random_points() {
    let positive_ops: [(&str, Unary); 5] = [
        ("log", |g, x| g.log(x)),
        ("sqrt", |g, x| g.sqrt(x)),
        ("powf", |g, x| g.powf(x, 1.7)),
        ("lgamma", |g, x| g.lgamma(x)),
        ("digamma", |g, x| g.digamma(x)),
    ];
    let real_ops: [(&str, Unary); 6] = [
        ("exp", |g, x| Ok(g.exp(x))),
        ("neg", |g, x| Ok(g.neg(x))),
        ("abs", |g, x| Ok(g.abs(x))),
        ("relu", |g, x| Ok(g.relu(x))),
        ("softplus", |g, x| Ok(g.softplus(x))),
        ("affine", |g, x| {
            let y = g.mul_scalar(x, -2.5);
            Ok(g.add_scalar(y, 0.3))
        }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut check = |name: &str, op: Unary, lo: f64, hi: f64| {
        for _ in 0..100 {
            let mut x: f64 = rng.gen_range(lo..hi);
            if x.abs() < 1e-3 {
                x += 0.01;
            }
            let err = grad_check(
                |g, v| {
                    let y = op(g, v[0])?;
                    Ok(g.sum(y))
                },
                &[Tensor::vector(vec![x])],
                H,
            )
            .unwrap();
            assert!(err < 1e-5, "{name} at {x}: {err:e}");
        }
    };
    for (name, op) in positive_ops {
        check(name, op, 0.1, 20.0);
    }
    for (name, op) in real_ops {
        check(name, op, -3.0, 3.0);
    }
}

type Binary = fn(&mut Graph, Var, Var) -> Result<Var>;

#[test]
fn binary_and_matrix_primitives() {
    let ops: [(&str, Binary); 7] = [
        ("add", |g, a, b| g.add(a, b)),
        ("sub", |g, a, b| g.sub(a, b)),
        ("mul", |g, a, b| g.mul(a, b)),
        ("div", |g, a, b| g.div(a, b)),
        ("pow", |g, a, b| g.pow(a, b)),
        ("matmul", |g, a, b| {
            let bt = g.transpose(b)?;
            g.matmul(a, bt)
        }),
        ("cosine", |g, a, b| g.cosine(a, b)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (name, op) in ops {
        for _ in 0..100 {
            let a = Tensor::matrix(2, 3, (0..6).map(|_| rng.gen_range(0.2..3.0)).collect()).unwrap();
            let b = Tensor::matrix(2, 3, (0..6).map(|_| rng.gen_range(0.2..3.0)).collect()).unwrap();
            let err = grad_check(
                |g, v| {
                    let y = op(g, v[0], v[1])?;
                    let y = g.mul(y, y)?;
                    Ok(g.sum(y))
                },
                &[a, b],
                H,
            )
            .unwrap();
            assert!(err < 1e-5, "{name}: {err:e}");
        }
    }
}

#[test]
fn linear_layer_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let x = Tensor::matrix(3, 4, (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let w = Tensor::matrix(2, 4, (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let b = Tensor::vector(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let err = grad_check(
            |g, v| {
                let z = g.linear(v[0], v[1], v[2])?;
                let c = g.column(z, 1)?;
                let s = g.sum_rows(z);
                let t = g.add(s, c)?;
                let t = g.mul(t, t)?;
                g.mean(t)
            },
            &[x, w, b],
            H,
        )
        .unwrap();
        assert!(err < 1e-5, "{err:e}");
    }
}
