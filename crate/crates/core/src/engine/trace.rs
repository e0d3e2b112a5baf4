use std::io::{self, Write};

use sha2::{Digest, Sha256};

use crate::time::SimTime;

/// Vehicle column value for kernel-wide events.
pub const NO_VEHICLE: usize = usize::MAX;

/// Hashes every processed event and optionally writes it out as
/// `time,vehicle,kind,detail` lines.
pub struct Trace<'w> {
    hasher: Sha256,
    out: Option<&'w mut dyn Write>,
    error: Option<io::Error>,
}

impl<'w> Trace<'w> {
    pub fn new(out: Option<&'w mut dyn Write>) -> Self {
        let mut t = Trace {
            hasher: Sha256::new(),
            out,
            error: None,
        };
        if let Some(w) = t.out.as_mut() {
            if let Err(e) = writeln!(w, "time,vehicle,kind,detail") {
                t.error = Some(e);
            }
        }
        t
    }

    pub fn record(&mut self, time: SimTime, vehicle: usize, kind: &str, detail: u64) {
        self.hasher.update(time.as_nanos().to_le_bytes());
        self.hasher.update((vehicle as u64).to_le_bytes());
        self.hasher.update(kind.as_bytes());
        self.hasher.update(detail.to_le_bytes());
        if self.error.is_some() {
            return;
        }
        if let Some(w) = self.out.as_mut() {
            let res = if vehicle == NO_VEHICLE {
                writeln!(w, "{time},-,{kind},{detail}")
            } else {
                writeln!(w, "{time},{vehicle},{kind},{detail}")
            };
            if let Err(e) = res {
                self.error = Some(e);
            }
        }
    }

    /// Hex digest, or the first write error.
    pub fn finish(self) -> io::Result<String> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let digest = self.hasher.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
