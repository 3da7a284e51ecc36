//! Naive reference implementations of the metrics, written straight from
//! their definitions without sharing code with the library.

use chartjudge::datamodel::{Adherence, Preference, Score};
use chartjudge::metrics::LengthRecord;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn accuracy<T: PartialEq>(records: &[(Option<T>, T)]) -> f64 {
    let mut hits = 0.0;
    for (p, g) in records {
        if let Some(p) = p {
            if p == g {
                hits += 1.0;
            }
        }
    }
    hits / records.len() as f64
}

pub fn error_distance(records: &[(Option<Score>, Score)]) -> f64 {
    let mut total = 0i64;
    for (p, g) in records {
        total += match p {
            Some(p) => (i64::from(p.get()) - i64::from(g.get())).abs(),
            None => 5,
        };
    }
    total as f64 / records.len() as f64
}

pub fn position_bias(ab: &[(u32, Option<Preference>)], ba: &[(u32, Option<Preference>)]) -> f64 {
    let mut flips = 0;
    for (k, p) in ab {
        let mut other = None;
        for (k2, q) in ba {
            if k2 == k {
                other = Some(*q);
            }
        }
        let q = other.expect("aligned fixture");
        let same = matches!((p, q), (Some(x), Some(y)) if *x == y);
        if !same {
            flips += 1;
        }
    }
    flips as f64 / ab.len() as f64
}

pub fn length_bias(records: &[LengthRecord]) -> Option<f64> {
    let mut den = 0;
    let mut num = 0;
    for r in records {
        if r.gold == Preference::Tie || r.len_a == r.len_b {
            continue;
        }
        den += 1;
        let wrong_longer = match r.predicted {
            Some(Preference::ModelA) => r.gold != Preference::ModelA && r.len_a > r.len_b,
            Some(Preference::ModelB) => r.gold != Preference::ModelB && r.len_b > r.len_a,
            _ => false,
        };
        if wrong_longer {
            num += 1;
        }
    }
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn adherence(records: &[Adherence]) -> f64 {
    records.iter().map(|a| if *a == Adherence::Strict { 1.0 } else { 0.0 }).sum::<f64>() / records.len() as f64
}

/// Rank of each value as 1 + (# smaller) + (# equal others) / 2.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let smaller = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let (x, y) = (ranks(a), ranks(b));
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let sxx: f64 = x.iter().map(|p| p * p).sum();
    let syy: f64 = y.iter().map(|q| q * q).sum();
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    (den > 0.0).then(|| (n * sxy - sx * sy) / den)
}

pub struct Fixture {
    pub prefs: Vec<(Option<Preference>, Preference)>,
    pub scores: Vec<(Option<Score>, Score)>,
    pub ab: Vec<(u32, Option<Preference>)>,
    pub ba: Vec<(u32, Option<Preference>)>,
    pub lengths: Vec<LengthRecord>,
    pub adherence: Vec<Adherence>,
    pub rank_a: Vec<f64>,
    pub rank_b: Vec<f64>,
}

fn pref(rng: &mut ChaCha8Rng) -> Preference {
    [Preference::ModelA, Preference::ModelB, Preference::Tie][rng.gen_range(0..3)]
}

fn maybe<T>(rng: &mut ChaCha8Rng, v: T) -> Option<T> {
    (rng.gen_range(0..6) != 0).then_some(v)
}

/// Random fixture with between 1 and 20 records per metric.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=20);
    let mut f = Fixture {
        prefs: vec![],
        scores: vec![],
        ab: vec![],
        ba: vec![],
        lengths: vec![],
        adherence: vec![],
        rank_a: vec![],
        rank_b: vec![],
    };
    for i in 0..n {
        let p = pref(&mut rng);
        f.prefs.push((maybe(&mut rng, p), pref(&mut rng)));
        let s = Score::new(rng.gen_range(1..=5)).unwrap();
        f.scores.push((maybe(&mut rng, s), Score::new(rng.gen_range(1..=5)).unwrap()));
        let (x, y) = (pref(&mut rng), pref(&mut rng));
        f.ab.push((i, maybe(&mut rng, x)));
        f.ba.push((i, maybe(&mut rng, y)));
        let predicted = pref(&mut rng);
        f.lengths.push(LengthRecord {
            predicted: maybe(&mut rng, predicted),
            gold: pref(&mut rng),
            len_a: rng.gen_range(1..6),
            len_b: rng.gen_range(1..6),
        });
        f.adherence
            .push([Adherence::Strict, Adherence::Repaired, Adherence::Failed][rng.gen_range(0..3)]);
        f.rank_a.push(f64::from(rng.gen_range(1..=5)));
        f.rank_b.push(f64::from(rng.gen_range(1..=5)));
    }
    // BA runs arrive in a different order
    let rot = rng.gen_range(0..n as usize);
    f.ba.rotate_left(rot);
    f
}
