//! One-against-one multiclass wrapper around [`svm_train`].

use serde::{Deserialize, Serialize};

use super::svm::{svm_train, SvmModel};
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

/// One binary model per class pair. In the model for `(a, b)`, class `a`
/// is the positive side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvoModel {
    pub classes: Vec<u32>,
    pub pairs: Vec<PairModel>,
    pub n_train: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub positive: u32,
    pub negative: u32,
    /// Indices of the training bags this model saw.
    pub members: Vec<usize>,
    pub model: SvmModel,
}

pub fn ovo_train(gram: &GramMatrix, labels: &[u32], c: f64, tol: f64) -> Result<OvoModel> {
    if labels.len() != gram.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a {}-bag gram matrix",
            labels.len(),
            gram.len()
        )));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("one-vs-one needs at least two classes".into()));
    }
    let mut pairs = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for (p, &a) in classes.iter().enumerate() {
        for &b in &classes[p + 1..] {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let signs: Vec<i8> = members.iter().map(|&i| if labels[i] == a { 1 } else { -1 }).collect();
            let model = svm_train(&gram.select(&members), &signs, c, tol)?;
            pairs.push(PairModel {
                positive: a,
                negative: b,
                members,
                model,
            });
        }
    }
    Ok(OvoModel {
        classes,
        pairs,
        n_train: labels.len(),
    })
}

impl OvoModel {
    /// Majority vote over the pairwise models. Ties go to the class with the
    /// larger summed |score| among its wins, then to the lowest class.
    pub fn predict(&self, cross: &[f64]) -> Result<u32> {
        if cross.len() != self.n_train {
            return Err(Error::InvalidArgument(format!(
                "kernel row has {} entries, model has {} training bags",
                cross.len(),
                self.n_train
            )));
        }
        let mut votes = vec![0usize; self.classes.len()];
        let mut strength = vec![0.0f64; self.classes.len()];
        for pair in &self.pairs {
            let row: Vec<f64> = pair.members.iter().map(|&i| cross[i]).collect();
            let (score, sign) = pair.model.predict(&row)?;
            let winner = if sign > 0 { pair.positive } else { pair.negative };
            let w = self.classes.binary_search(&winner).expect("known class");
            votes[w] += 1;
            strength[w] += score.abs();
        }
        let mut best = 0;
        for k in 1..self.classes.len() {
            if votes[k] > votes[best] || (votes[k] == votes[best] && strength[k] > strength[best]) {
                best = k;
            }
        }
        Ok(self.classes[best])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::svm::DEFAULT_TOL;

    fn block_gram(sizes: &[usize]) -> (GramMatrix, Vec<u32>) {
        let n: usize = sizes.iter().sum();
        let mut labels = Vec::new();
        for (k, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat_n(k as u32 + 1, s));
        }
        let values = (0..n * n)
            .map(|t| {
                let (i, j) = (t / n, t % n);
                if i == j {
                    1.0
                } else if labels[i] == labels[j] {
                    0.9
                } else {
                    0.05
                }
            })
            .collect();
        (GramMatrix::from_values(n, values).unwrap(), labels)
    }

    #[test]
    fn separated_blocks() {
        let (g, labels) = block_gram(&[3, 2, 4]);
        let m = ovo_train(&g, &labels, 10.0, DEFAULT_TOL).unwrap();
        assert_eq!(m.pairs.len(), 3);
        for i in 0..g.len() {
            assert_eq!(m.predict(g.row(i)).unwrap(), labels[i]);
        }
    }

    #[test]
    fn two_classes_match_binary_svm() {
        let (g, labels) = block_gram(&[3, 3]);
        let m = ovo_train(&g, &labels, 1.0, DEFAULT_TOL).unwrap();
        let signs: Vec<i8> = labels.iter().map(|&l| if l == 1 { 1 } else { -1 }).collect();
        let b = svm_train(&g, &signs, 1.0, DEFAULT_TOL).unwrap();
        for row in [vec![0.2, 0.1, 0.3, 0.3, 0.1, 0.2], vec![0.0; 6], g.row(4).to_vec()] {
            let expected = if b.predict(&row).unwrap().1 > 0 { 1 } else { 2 };
            assert_eq!(m.predict(&row).unwrap(), expected);
        }
    }

    #[test]
    fn full_tie_goes_to_lowest_class() {
        // cyclic votes 1>2, 3>1, 2>3 with equal |score|: every class has one
        // vote and the same strength
        let pair = |positive, negative, bias| PairModel {
            positive,
            negative,
            members: vec![0],
            model: SvmModel {
                alpha: vec![0.0],
                labels: vec![1],
                bias,
                c: 1.0,
                bag_ids: vec!["0".into()],
                config_digest: [0; 32],
                iterations: 0,
            },
        };
        let m = OvoModel {
            classes: vec![1, 2, 3],
            pairs: vec![pair(1, 2, 0.5), pair(1, 3, -0.5), pair(2, 3, 0.5)],
            n_train: 1,
        };
        assert_eq!(m.predict(&[0.7]).unwrap(), 1);
    }

    #[test]
    fn rejects_single_class() {
        let (g, _) = block_gram(&[3]);
        assert!(ovo_train(&g, &[1, 1, 1], 1.0, DEFAULT_TOL).is_err());
    }
}
