use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// Schema version written in the leading comment line.
pub const EPISODE_CSV_VERSION: u32 = 1;

/// One policy episode, flattened for plotting and audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub instance_id: usize,
    pub policy: String,
    pub seed: u64,
    /// Empty when the episode hit its cap.
    pub consumption: Option<u64>,
    pub t_star: Option<u64>,
    pub passthrough: Option<u64>,
}

pub fn write_episode_csv<W: Write>(mut out: W, rows: &[EpisodeRow]) -> csv::Result<()> {
    writeln!(out, "# gdalloc episodes v{EPISODE_CSV_VERSION}")?;
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_episode_csv<R: Read>(input: R) -> csv::Result<Vec<EpisodeRow>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input)
        .deserialize()
        .collect()
}
