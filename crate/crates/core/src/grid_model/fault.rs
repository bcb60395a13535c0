use std::fmt;
use std::str::FromStr;

use super::C64;
use crate::error::{Error, Result};

/// Short-circuit fault types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultKind {
    /// Three-phase to ground.
    ThreePhase,
    /// Single line to ground.
    SingleLineGround,
    /// Line to line (two-phase).
    LineLine,
    /// Double line to ground (two-phase to ground).
    DoubleLineGround,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::ThreePhase,
        FaultKind::SingleLineGround,
        FaultKind::LineLine,
        FaultKind::DoubleLineGround,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FaultKind::ThreePhase => "3pg",
            FaultKind::SingleLineGround => "slg",
            FaultKind::LineLine => "ll",
            FaultKind::DoubleLineGround => "llg",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FaultKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "3pg" | "3ph" | "3p" => Ok(FaultKind::ThreePhase),
            "slg" | "1pg" => Ok(FaultKind::SingleLineGround),
            "ll" | "2p" => Ok(FaultKind::LineLine),
            "llg" | "2pg" => Ok(FaultKind::DoubleLineGround),
            other => Err(Error::Config(format!("unknown fault type `{other}`"))),
        }
    }
}

/// Impedance to insert at the fault point of the positive-sequence network
/// so that it carries the positive-sequence fault current of `kind`.
pub fn fault_shunt(kind: FaultKind, z_neg: C64, z_zero: C64, z_fault: C64) -> Result<C64> {
    for z in [z_neg, z_zero, z_fault] {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Config("fault impedances must be finite".into()));
        }
    }
    Ok(match kind {
        FaultKind::ThreePhase => z_fault,
        FaultKind::SingleLineGround => z_fault + z_neg + z_zero,
        FaultKind::LineLine => z_fault + z_neg,
        FaultKind::DoubleLineGround => {
            let sum = z_neg + z_zero;
            if sum.norm() == 0.0 {
                return Err(Error::DegenerateFault);
            }
            z_fault + z_neg * z_zero / sum
        }
    })
}

/// Admittance of a fault impedance; impedances below `1 / bolted` are
/// capped at the bolted-fault admittance.
pub fn shunt_admittance(z: C64, bolted: f64) -> C64 {
    if z.norm() * bolted <= 1.0 {
        C64::new(bolted, 0.0)
    } else {
        z.inv()
    }
}
