use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{EpochedDataset, SessionKind, SessionTag};
use crate::error::{Error, Result};

/// `k` (train, validation) index pairs. Members of each class are shuffled and dealt round
/// robin, continuing where the previous class stopped, so per-class and total fold sizes
/// both differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::InvalidArg {
            arg: "k",
            reason: format!("{k} folds; need at least 2"),
        });
    }
    let n_cls = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_cls];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidArg {
                arg: "labels",
                reason: format!("class {c} has {} members, fewer than {k} folds", members.len()),
            });
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next % k].push(i);
            next += 1;
        }
    }
    Ok(folds
        .iter()
        .enumerate()
        .map(|(f, val)| {
            let mut val = val.clone();
            val.sort_unstable();
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            (train, val)
        })
        .collect())
}

/// Which session of a held-out subject is the test set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestSessionFilter {
    /// Every online session.
    Online,
    /// The offline session with this index.
    Offline(u8),
    /// Online sessions when the subject has any, otherwise the last offline session.
    Auto,
}

impl std::str::FromStr for TestSessionFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(TestSessionFilter::Online),
            "auto" => Ok(TestSessionFilter::Auto),
            _ => s
                .strip_prefix("offline")
                .and_then(|i| i.trim_start_matches([':', '=']).parse().ok())
                .map(TestSessionFilter::Offline)
                .ok_or_else(|| Error::InvalidArg {
                    arg: "test_session",
                    reason: format!("`{s}` is not online, auto or offline<N>"),
                }),
        }
    }
}

impl TryFrom<String> for TestSessionFilter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestSessionFilter> for String {
    fn from(f: TestSessionFilter) -> String {
        f.to_string()
    }
}

impl std::fmt::Display for TestSessionFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestSessionFilter::Online => write!(f, "online"),
            TestSessionFilter::Offline(i) => write!(f, "offline{i}"),
            TestSessionFilter::Auto => write!(f, "auto"),
        }
    }
}

impl TestSessionFilter {
    /// The session tags selected for `subject`, given the sessions that subject has.
    fn select(&self, sessions: &[SessionTag]) -> Vec<SessionTag> {
        match self {
            TestSessionFilter::Online => sessions.iter().copied().filter(|s| s.kind == SessionKind::Online).collect(),
            TestSessionFilter::Offline(i) => sessions.iter().copied().filter(|s| *s == SessionTag::offline(*i)).collect(),
            TestSessionFilter::Auto => {
                let online = TestSessionFilter::Online.select(sessions);
                if !online.is_empty() {
                    online
                } else {
                    sessions.iter().copied().filter(|s| s.kind == SessionKind::Offline).max().into_iter().collect()
                }
            }
        }
    }
}

/// One outer split: train and test trial indices into the full dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectSplit {
    pub subject: u32,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn sessions_of(ds: &EpochedDataset, subject: u32) -> Vec<SessionTag> {
    let mut s: Vec<SessionTag> = ds.indices_where(|id, _| id == subject).into_iter().map(|i| ds.session_tags()[i]).collect();
    s.sort_unstable();
    s.dedup();
    s
}

fn test_indices(ds: &EpochedDataset, subject: u32, filter: TestSessionFilter) -> Result<Vec<usize>> {
    let chosen = filter.select(&sessions_of(ds, subject));
    let idx = ds.indices_where(|id, tag| id == subject && chosen.contains(&tag));
    if idx.is_empty() {
        return Err(Error::InvalidArg {
            arg: "test_session",
            reason: format!("subject {subject} has no trials matching {filter:?}"),
        });
    }
    Ok(idx)
}

/// Leave-one-subject-out: each fold trains on every session of the other subjects.
pub fn loso_split(ds: &EpochedDataset, filter: TestSessionFilter) -> Result<Vec<SubjectSplit>> {
    let subjects = ds.subjects();
    if subjects.len() < 2 {
        return Err(Error::InvalidArg {
            arg: "dataset",
            reason: format!("leave-one-subject-out needs at least 2 subjects, found {}", subjects.len()),
        });
    }
    subjects
        .iter()
        .map(|&s| {
            Ok(SubjectSplit {
                subject: s,
                train: ds.indices_where(|id, _| id != s),
                test: test_indices(ds, s, filter)?,
            })
        })
        .collect()
}

/// Within-subject split: the test session against that subject's remaining sessions.
pub fn dependent_split(ds: &EpochedDataset, filter: TestSessionFilter) -> Result<Vec<SubjectSplit>> {
    ds.subjects()
        .iter()
        .map(|&s| {
            let test = test_indices(ds, s, filter)?;
            let test_tags: Vec<SessionTag> = test.iter().map(|&i| ds.session_tags()[i]).collect();
            let train = ds.indices_where(|id, tag| id == s && !test_tags.contains(&tag));
            if train.is_empty() {
                return Err(Error::InvalidArg {
                    arg: "scheme",
                    reason: format!("subject {s} has a single session; the dependent scheme needs separate train and test sessions"),
                });
            }
            Ok(SubjectSplit { subject: s, train, test })
        })
        .collect()
}
