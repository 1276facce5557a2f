use rand::Rng;
use sgp_core::rng::{stream, Stream};
use sgp_core::trainer::{compute_metrics, compute_relative_fwt};
use sgp_core::AccuracyMatrix;

fn random_rows(rng: &mut impl Rng, tasks: usize) -> Vec<Vec<f64>> {
    (0..tasks).map(|i| (0..=i).map(|_| rng.gen_range(0.0..=1.0)).collect()).collect()
}

fn brute_acc(rows: &[Vec<f64>]) -> f64 {
    let last = rows.last().unwrap();
    let mut s = 0.0;
    for v in last {
        s += v;
    }
    s / last.len() as f64
}

fn brute_bwt(rows: &[Vec<f64>]) -> f64 {
    let t = rows.len();
    let mut s = 0.0;
    for i in 0..t - 1 {
        s += rows[t - 1][i] - rows[i][i];
    }
    s / (t - 1) as f64
}

fn brute_fwt(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i][i] - b[i][i];
    }
    s / a.len() as f64
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = stream(99, Stream::Data);
    for case in 0..50 {
        let tasks = rng.gen_range(1..=12);
        let rows = random_rows(&mut rng, tasks);
        let other = random_rows(&mut rng, tasks);
        let r = AccuracyMatrix::from_rows(&rows).unwrap();
        let m = compute_metrics(&r).unwrap();
        assert!((m.acc - brute_acc(&rows)).abs() <= 1e-12, "case {case}");
        match m.bwt {
            Some(b) => assert!((b - brute_bwt(&rows)).abs() <= 1e-12, "case {case}"),
            None => assert_eq!(tasks, 1),
        }
        let fwt = compute_relative_fwt(&r, &AccuracyMatrix::from_rows(&other).unwrap()).unwrap();
        assert!((fwt - brute_fwt(&rows, &other)).abs() <= 1e-12, "case {case}");
    }
}
