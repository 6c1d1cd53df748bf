use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// One update (or the initial evaluation at step 0). Validation columns are
/// empty on steps without an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub comp_acc: Option<f64>,
    pub noncomp_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn evaluations(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.val_loss.is_some())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, TrainError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| TrainError::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_csv_bytes()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, TrainError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn from_csv_reader<R: std::io::Read>(r: R) -> Result<Self, TrainError> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<Result<Vec<LogRow>, _>>()?;
        Ok(Self { rows })
    }
}
