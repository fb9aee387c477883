use std::fs;
use std::path::Path;

use crate::dataio::EpochedDataset;
use crate::error::{Error, Result};
use crate::nncore::Mode;
use crate::Network;

/// Infer-mode latent vectors as CSV: `subject,trial,label,z1..zN`, where `trial` counts
/// within each subject.
pub fn latents_csv(net: &Network, ds: &EpochedDataset) -> Result<String> {
    let cfg = net.config();
    if ds.n_channels() != cfg.channels || ds.n_samples() != cfg.samples {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint has channels = {}, samples = {}; dataset has channels = {}, samples = {}",
            cfg.channels,
            cfg.samples,
            ds.n_channels(),
            ds.n_samples()
        )));
    }
    let mut out = String::from("subject,trial,label");
    for k in 1..=cfg.latent {
        out.push_str(&format!(",z{k}"));
    }
    out.push('\n');
    let mut counters = std::collections::HashMap::new();
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(64) {
        let z = net.encode_frozen(&ds.batch_tensor(chunk), Mode::Infer)?;
        for (row, &i) in z.data().chunks(cfg.latent).zip(chunk) {
            let s = ds.subject_ids()[i];
            let n = counters.entry(s).or_insert(0usize);
            out.push_str(&format!("{s},{n},{}", ds.labels()[i]));
            *n += 1;
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn export_latents(net: &Network, ds: &EpochedDataset, path: &Path) -> Result<usize> {
    let text = latents_csv(net, ds)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(ds.len())
}
