//! Assortments, transactions and choice datasets, plus the JSON Lines
//! transaction file format.
//!
//! A transaction file has one header line followed by one line per
//! transaction:
//!
//! ```text
//! {"num_products":3,"outside_option":false}
//! {"a":[0,2],"y":2}
//! ```
//!
//! Product indices are 0-based and the offered list must be strictly
//! ascending. Unknown keys are rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ChoiceError, Result};

/// The subset of products offered to a customer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assortment {
    mask: Vec<bool>,
    offered: Vec<usize>,
}

impl Assortment {
    /// Builds an assortment from strictly ascending product indices.
    pub fn from_indices(num_products: usize, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(ChoiceError::InvalidAssortment("empty assortment".into()));
        }
        let mut mask = vec![false; num_products];
        let mut prev: Option<usize> = None;
        for &i in indices {
            if i >= num_products {
                return Err(ChoiceError::InvalidAssortment(format!(
                    "product index {i} >= num_products {num_products}"
                )));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(ChoiceError::InvalidAssortment(
                    "product indices not strictly ascending".into(),
                ));
            }
            mask[i] = true;
            prev = Some(i);
        }
        Ok(Self {
            mask,
            offered: indices.to_vec(),
        })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let offered: Vec<usize> = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        if offered.is_empty() {
            return Err(ChoiceError::InvalidAssortment("empty assortment".into()));
        }
        Ok(Self {
            mask: bits.to_vec(),
            offered,
        })
    }

    pub fn full(num_products: usize) -> Self {
        assert!(num_products > 0, "assortment needs at least one product");
        Self {
            mask: vec![true; num_products],
            offered: (0..num_products).collect(),
        }
    }

    pub fn num_products(&self) -> usize {
        self.mask.len()
    }

    /// Offered product indices, ascending.
    pub fn offered(&self) -> &[usize] {
        &self.offered
    }

    pub fn bits(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, product: usize) -> bool {
        self.mask.get(product).copied().unwrap_or(false)
    }

    /// Number of offered products.
    pub fn size(&self) -> usize {
        self.offered.len()
    }

    /// The assortment as a 0/1 real vector.
    pub fn indicator(&self) -> Vec<f64> {
        self.mask
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

/// An observed choice: the offered assortment and the chosen product.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    assortment: Assortment,
    choice: usize,
}

impl Transaction {
    pub fn new(assortment: Assortment, choice: usize) -> Result<Self> {
        if choice >= assortment.num_products() {
            return Err(ChoiceError::InvalidAssortment(format!(
                "choice {choice} >= num_products {}",
                assortment.num_products()
            )));
        }
        if !assortment.contains(choice) {
            return Err(ChoiceError::InvalidAssortment(
                "choice not in assortment".into(),
            ));
        }
        Ok(Self { assortment, choice })
    }

    pub fn assortment(&self) -> &Assortment {
        &self.assortment
    }

    pub fn choice(&self) -> usize {
        self.choice
    }

    /// One-hot encoding of the choice.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.assortment.num_products()];
        y[self.choice] = 1.0;
        y
    }
}

/// An immutable, validated collection of transactions over `num_products`
/// products.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceDataset {
    num_products: usize,
    outside_option: bool,
    transactions: Vec<Transaction>,
}

impl ChoiceDataset {
    pub fn new(
        num_products: usize,
        outside_option: bool,
        transactions: Vec<Transaction>,
    ) -> Result<Self> {
        let dataset = Self {
            num_products,
            outside_option,
            transactions,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    fn validate(&self) -> Result<()> {
        if self.num_products == 0 {
            return Err(ChoiceError::InvalidDataset(
                "num_products must be positive".into(),
            ));
        }
        for (index, t) in self.transactions.iter().enumerate() {
            if t.assortment.num_products() != self.num_products {
                return Err(ChoiceError::InvalidTransaction {
                    index,
                    reason: format!(
                        "assortment over {} products, dataset declares {}",
                        t.assortment.num_products(),
                        self.num_products
                    ),
                });
            }
            if self.outside_option && !t.assortment.contains(0) {
                return Err(ChoiceError::InvalidTransaction {
                    index,
                    reason: "outside option (product 0) not offered".into(),
                });
            }
        }
        Ok(())
    }

    pub fn num_products(&self) -> usize {
        self.num_products
    }

    pub fn outside_option(&self) -> bool {
        self.outside_option
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Dataset made of the transactions at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            num_products: self.num_products,
            outside_option: self.outside_option,
            transactions: indices
                .iter()
                .map(|&i| self.transactions[i].clone())
                .collect(),
        }
    }

    /// Number of times each product was chosen.
    pub fn choice_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_products];
        for t in &self.transactions {
            counts[t.choice] += 1;
        }
        counts
    }
}

/// Choice probabilities over all `m` products for one assortment.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceProbabilities(Vec<f64>);

impl ChoiceProbabilities {
    pub(crate) fn from_vec(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, product: usize) -> f64 {
        self.0[product]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks the distribution invariants against the generating assortment:
    /// entries in [0, 1] summing to 1 within `tol`, exact zeros off-assortment.
    pub fn is_valid_for(&self, assortment: &Assortment, tol: f64) -> bool {
        if self.0.len() != assortment.num_products() {
            return false;
        }
        let mut sum = 0.0;
        for (i, &p) in self.0.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return false;
            }
            if !assortment.contains(i) && p != 0.0 {
                return false;
            }
            sum += p;
        }
        (sum - 1.0).abs() <= tol
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    num_products: usize,
    #[serde(default)]
    outside_option: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransactionLine {
    a: Vec<usize>,
    y: usize,
}

/// Reads a dataset from any buffered reader in the transaction file format.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<ChoiceDataset> {
    let mut header: Option<HeaderLine> = None;
    let mut transactions = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line_number = lineno + 1;
        let line = line.map_err(|e| ChoiceError::Parse {
            line: line_number,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(h) = &header else {
            let parsed: HeaderLine =
                serde_json::from_str(&line).map_err(|e| ChoiceError::Parse {
                    line: line_number,
                    message: format!("header: {e}"),
                })?;
            if parsed.num_products == 0 {
                return Err(ChoiceError::Parse {
                    line: line_number,
                    message: "num_products must be positive".into(),
                });
            }
            header = Some(parsed);
            continue;
        };
        let parsed: TransactionLine =
            serde_json::from_str(&line).map_err(|e| ChoiceError::Parse {
                line: line_number,
                message: e.to_string(),
            })?;
        let index = transactions.len();
        let invalid = |reason: String| ChoiceError::InvalidTransaction { index, reason };
        let assortment = Assortment::from_indices(h.num_products, &parsed.a)
            .map_err(|e| invalid(invalid_reason(e)))?;
        let t = Transaction::new(assortment, parsed.y).map_err(|e| invalid(invalid_reason(e)))?;
        if h.outside_option && !t.assortment.contains(0) {
            return Err(invalid("outside option (product 0) not offered".into()));
        }
        transactions.push(t);
    }
    let header = header.ok_or(ChoiceError::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    ChoiceDataset::new(header.num_products, header.outside_option, transactions)
}

fn invalid_reason(e: ChoiceError) -> String {
    match e {
        ChoiceError::InvalidAssortment(reason) => reason,
        other => other.to_string(),
    }
}

/// Writes a dataset in the transaction file format. Refuses invalid datasets.
pub fn write_dataset<W: Write>(dataset: &ChoiceDataset, mut writer: W) -> std::io::Result<()> {
    let header = HeaderLine {
        num_products: dataset.num_products,
        outside_option: dataset.outside_option,
    };
    writeln!(writer, "{}", serde_json::to_string(&header)?)?;
    for t in &dataset.transactions {
        let line = TransactionLine {
            a: t.assortment.offered.clone(),
            y: t.choice,
        };
        writeln!(writer, "{}", serde_json::to_string(&line)?)?;
    }
    writer.flush()
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChoiceDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ChoiceError::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn save_dataset(dataset: &ChoiceDataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.validate()?;
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ChoiceError::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| ChoiceError::io(path, e))
}

/// Seeded random split into (train, test). The first
/// `floor(train_fraction * n)` transactions of a uniform random permutation
/// form the training set.
pub fn split_dataset(
    dataset: &ChoiceDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(ChoiceDataset, ChoiceDataset)> {
    if dataset.len() < 2 {
        return Err(ChoiceError::InvalidDataset(format!(
            "cannot split a dataset with {} transactions",
            dataset.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ChoiceError::InvalidConfig(format!(
            "train_fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (train_fraction * n as f64).floor() as usize;
    let (train, test) = order.split_at(n_train);
    Ok((dataset.select(train), dataset.select(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ChoiceDataset> {
        read_dataset(text.as_bytes())
    }

    fn toy(n: usize) -> ChoiceDataset {
        let ts = (0..n)
            .map(|i| {
                let a = Assortment::from_indices(3, &[0, 1 + i % 2]).unwrap();
                Transaction::new(a, 2 * (i % 2)).unwrap()
            })
            .collect();
        ChoiceDataset::new(3, false, ts).unwrap()
    }

    #[test]
    fn loads_single_transaction() {
        let d = parse("{\"num_products\":3}\n{\"a\":[0,2],\"y\":2}\n").unwrap();
        assert_eq!(d.num_products(), 3);
        assert_eq!(d.len(), 1);
        let t = &d.transactions()[0];
        assert_eq!(t.assortment().bits(), &[true, false, true]);
        assert_eq!(t.choice(), 2);
        assert!(!d.outside_option());
    }

    #[test]
    fn rejects_choice_outside_assortment() {
        let err = parse("{\"num_products\":3}\n{\"a\":[1],\"y\":0}\n").unwrap_err();
        match err {
            ChoiceError::InvalidTransaction { index, reason } => {
                assert_eq!(index, 0);
                assert_eq!(reason, "choice not in assortment");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_assortment() {
        let err =
            parse("{\"num_products\":3}\n{\"a\":[0],\"y\":0}\n{\"a\":[],\"y\":0}\n").unwrap_err();
        match err {
            ChoiceError::InvalidTransaction { index, reason } => {
                assert_eq!(index, 1);
                assert_eq!(reason, "empty assortment");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_and_unsorted_indices() {
        assert!(parse("{\"num_products\":3}\n{\"a\":[0,3],\"y\":0}\n").is_err());
        assert!(parse("{\"num_products\":3}\n{\"a\":[2,0],\"y\":0}\n").is_err());
        assert!(parse("{\"num_products\":3}\n{\"a\":[0,0],\"y\":0}\n").is_err());
        assert!(parse("{\"num_products\":3}\n{\"a\":[0,1],\"y\":5}\n").is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("{\"num_products\":3}\n{\"a\":[0],\"y\":0}\nnot json\n").unwrap_err();
        assert!(matches!(err, ChoiceError::Parse { line: 3, .. }), "{err:?}");
        let err = parse("{\"num_products\":3,\"extra\":1}\n").unwrap_err();
        assert!(matches!(err, ChoiceError::Parse { line: 1, .. }));
        let err = parse("{\"num_products\":3}\n{\"a\":[0],\"y\":0,\"w\":1}\n").unwrap_err();
        assert!(matches!(err, ChoiceError::Parse { line: 2, .. }));
    }

    #[test]
    fn outside_option_enforced_on_load() {
        let err = parse("{\"num_products\":3,\"outside_option\":true}\n{\"a\":[1,2],\"y\":1}\n")
            .unwrap_err();
        assert!(matches!(
            err,
            ChoiceError::InvalidTransaction { index: 0, .. }
        ));
    }

    #[test]
    fn save_refuses_invalid_outside_option() {
        let bad = ChoiceDataset {
            num_products: 2,
            outside_option: true,
            transactions: vec![
                Transaction::new(Assortment::from_indices(2, &[1]).unwrap(), 1).unwrap(),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        assert!(matches!(
            save_dataset(&bad, &path),
            Err(ChoiceError::InvalidTransaction { index: 0, .. })
        ));
        assert!(!path.exists());
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let d = ChoiceDataset::new(4, true, vec![]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"num_products\":4,\"outside_option\":true}\n"
        );
        assert_eq!(read_dataset(&buf[..]).unwrap(), d);
    }

    #[test]
    fn file_round_trip() {
        let d = toy(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn split_sizes_follow_floor() {
        let d = toy(10);
        let (tr, te) = split_dataset(&d, 0.7, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let (tr, te) = split_dataset(&d, 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
    }

    #[test]
    fn split_is_deterministic() {
        let d = toy(10);
        assert_eq!(
            split_dataset(&d, 0.7, 1).unwrap(),
            split_dataset(&d, 0.7, 1).unwrap()
        );
    }

    #[test]
    fn split_rejects_tiny_datasets_and_bad_fractions() {
        assert!(split_dataset(&toy(1), 0.5, 0).is_err());
        assert!(split_dataset(&toy(4), 1.0, 0).is_err());
        assert!(split_dataset(&toy(4), 0.0, 0).is_err());
    }

    #[test]
    fn singleton_assortments_are_legal() {
        let d = parse("{\"num_products\":2}\n{\"a\":[1],\"y\":1}\n").unwrap();
        assert_eq!(d.transactions()[0].assortment().size(), 1);
    }

    fn arb_dataset() -> impl Strategy<Value = ChoiceDataset> {
        (1usize..7, any::<bool>()).prop_flat_map(|(m, outside)| {
            let txn = proptest::collection::vec(any::<bool>(), m).prop_flat_map(move |mut bits| {
                if outside {
                    bits[0] = true;
                }
                if !bits.iter().any(|&b| b) {
                    bits[m - 1] = true;
                }
                let offered: Vec<usize> = (0..m).filter(|&i| bits[i]).collect();
                let len = offered.len();
                (Just(offered), 0..len)
            });
            proptest::collection::vec(txn, 0..20).prop_map(move |rows| {
                let ts = rows
                    .into_iter()
                    .map(|(offered, k)| {
                        let y = offered[k];
                        Transaction::new(Assortment::from_indices(m, &offered).unwrap(), y).unwrap()
                    })
                    .collect();
                ChoiceDataset::new(m, outside, ts).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn write_read_round_trip(d in arb_dataset()) {
            let mut buf = Vec::new();
            write_dataset(&d, &mut buf).unwrap();
            prop_assert_eq!(read_dataset(&buf[..]).unwrap(), d);
        }

        #[test]
        fn split_partitions_input(d in arb_dataset(), frac in 0.05f64..0.95, seed in any::<u64>()) {
            prop_assume!(d.len() >= 2);
            let (tr, te) = split_dataset(&d, frac, seed).unwrap();
            prop_assert_eq!(tr.len() + te.len(), d.len());
            let mut all: Vec<_> = tr.transactions().iter().chain(te.transactions()).cloned().collect();
            let mut orig = d.transactions().to_vec();
            let key = |t: &Transaction| (t.assortment().offered().to_vec(), t.choice());
            all.sort_by_key(key);
            orig.sort_by_key(key);
            prop_assert_eq!(all, orig);
        }
    }
}
