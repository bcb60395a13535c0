//! Static network model: data file parsing, bus admittance assembly, Newton
//! power flow, fault-shunt composition, Kron reduction and the three-stage
//! (prefault / fault-on / postfault) reduced networks used by the simulator.

mod fault;
mod kron;
mod power_flow;
mod stages;
mod ybus;

pub use fault::{fault_shunt, shunt_admittance, FaultKind};
pub use kron::{kron_reduce, ReducedNetwork, Stage};
pub use power_flow::{solve_power_flow, OperatingPoint, PowerFlowOptions};
pub use stages::{prefault_network, stage_networks, StageNetworks, StageOptions};
pub use ybus::{build_ybus, connected_components, StageEdit};

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const FORMAT_TAG: &str = "gridmodel-v1";
const IEEE39: &str = include_str!("../../data/ieee39.grid");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slack" => Some(BusKind::Slack),
            "pv" => Some(BusKind::Pv),
            "pq" => Some(BusKind::Pq),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    /// Voltage set-point for slack and PV buses; ignored for PQ buses.
    pub v_set: f64,
}

/// A series branch between two buses. `from` and `to` are bus *indices*.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: u32,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, split half at each end.
    pub b: f64,
    pub zero_seq_factor: f64,
}

impl Branch {
    pub fn impedance(&self) -> C64 {
        C64::new(self.r, self.x)
    }
}

/// Classical machine: constant EMF behind transient reactance.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: u32,
    /// Bus index of the terminal.
    pub bus: usize,
    pub p_gen: f64,
    pub h: f64,
    pub xd_prime: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub base_mva: f64,
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl GridModel {
    /// Builds a model and checks its invariants.
    pub fn new(
        base_mva: f64,
        frequency_hz: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let model = GridModel {
            base_mva,
            frequency_hz,
            buses,
            branches,
            generators,
        };
        model.validate()?;
        Ok(model)
    }

    /// The bundled IEEE 39-bus New England system.
    pub fn ieee39() -> Self {
        Self::parse(IEEE39).expect("bundled 39-bus data is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated model has a slack bus")
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Synchronous speed in rad/s.
    pub fn omega_sync(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if !(self.base_mva > 0.0) || !(self.frequency_hz > 0.0) {
            return bad("base_mva and frequency_hz must be positive".into());
        }
        let slack = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack != 1 {
            return bad(format!("expected exactly one slack bus, found {slack}"));
        }
        let mut ids: Vec<u32> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.buses.len() {
            return bad("duplicate bus id".into());
        }
        let n = self.buses.len();
        for br in &self.branches {
            if br.from >= n || br.to >= n || br.from == br.to {
                return bad(format!("branch {} has invalid endpoints", br.id));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return bad(format!("branch {} has zero impedance", br.id));
            }
            if !(br.zero_seq_factor > 0.0) {
                return bad(format!("branch {} zero-sequence factor must be positive", br.id));
            }
        }
        let mut gen_buses = Vec::new();
        for g in &self.generators {
            if g.bus >= n {
                return bad(format!("generator {} sits on a missing bus", g.id));
            }
            if !(g.h > 0.0) || !(g.xd_prime > 0.0) {
                return bad(format!("generator {} needs H > 0 and X'd > 0", g.id));
            }
            if self.buses[g.bus].kind == BusKind::Pq {
                return bad(format!("generator {} sits on a PQ bus", g.id));
            }
            gen_buses.push(g.bus);
        }
        gen_buses.sort_unstable();
        if gen_buses.windows(2).any(|w| w[0] == w[1]) {
            return bad("at most one generator per bus is supported".into());
        }
        if self.generators.is_empty() {
            return bad("model has no generators".into());
        }
        let comps = connected_components(n, self.branches.iter().map(|b| (b.from, b.to)));
        if comps.len() > 1 {
            let island = &comps[1];
            return Err(Error::Islanded {
                buses: island.iter().map(|&i| self.buses[i].id).collect(),
            });
        }
        Ok(())
    }

    /// Parses the `gridmodel-v1` text format.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            Preamble,
            Buses,
            Branches,
            Generators,
        }
        let err = |line: usize, msg: String| Error::GridParse { line, msg };

        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == FORMAT_TAG => {}
            _ => return Err(err(1, format!("missing `{FORMAT_TAG}` tag"))),
        }

        let mut section = Section::Preamble;
        let mut base_mva = None;
        let mut frequency = None;
        let mut buses = Vec::new();
        let mut raw_branches: Vec<(usize, [f64; 7])> = Vec::new();
        let mut raw_gens: Vec<(usize, [f64; 6])> = Vec::new();

        for (i, raw) in lines {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[buses]" => {
                    section = Section::Buses;
                    continue;
                }
                "[branches]" => {
                    section = Section::Branches;
                    continue;
                }
                "[generators]" => {
                    section = Section::Generators;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::Preamble => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| err(lineno, "expected `key = value`".into()))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| err(lineno, format!("bad number `{}`", v.trim())))?;
                    match k.trim() {
                        "base_mva" => base_mva = Some(v),
                        "frequency_hz" => frequency = Some(v),
                        other => return Err(err(lineno, format!("unknown key `{other}`"))),
                    }
                }
                Section::Buses => {
                    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                    if cols.len() != 7 {
                        return Err(err(lineno, format!("bus row needs 7 columns, got {}", cols.len())));
                    }
                    let id: u32 = cols[0]
                        .parse()
                        .map_err(|_| err(lineno, format!("bad bus id `{}`", cols[0])))?;
                    let kind = BusKind::parse(cols[1])
                        .ok_or_else(|| err(lineno, format!("bad bus type `{}`", cols[1])))?;
                    let nums = parse_floats(&cols[2..], lineno)?;
                    buses.push(Bus {
                        id,
                        kind,
                        p_load: nums[0],
                        q_load: nums[1],
                        g_shunt: nums[2],
                        b_shunt: nums[3],
                        v_set: nums[4],
                    });
                }
                Section::Branches => {
                    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                    if cols.len() != 7 {
                        return Err(err(lineno, format!("branch row needs 7 columns, got {}", cols.len())));
                    }
                    let nums = parse_floats(&cols, lineno)?;
                    raw_branches.push((lineno, nums.try_into().unwrap()));
                }
                Section::Generators => {
                    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                    if cols.len() != 6 {
                        return Err(err(lineno, format!("generator row needs 6 columns, got {}", cols.len())));
                    }
                    let nums = parse_floats(&cols, lineno)?;
                    raw_gens.push((lineno, nums.try_into().unwrap()));
                }
            }
        }

        let index_of = |id: f64, lineno: usize| -> Result<usize> {
            buses
                .iter()
                .position(|b: &Bus| b.id as f64 == id)
                .ok_or_else(|| err(lineno, format!("unknown bus id {id}")))
        };
        let mut branches = Vec::with_capacity(raw_branches.len());
        for (lineno, c) in &raw_branches {
            branches.push(Branch {
                id: c[0] as u32,
                from: index_of(c[1], *lineno)?,
                to: index_of(c[2], *lineno)?,
                r: c[3],
                x: c[4],
                b: c[5],
                zero_seq_factor: c[6],
            });
        }
        let mut generators = Vec::with_capacity(raw_gens.len());
        for (lineno, c) in &raw_gens {
            generators.push(Generator {
                id: c[0] as u32,
                bus: index_of(c[1], *lineno)?,
                p_gen: c[2],
                h: c[3],
                xd_prime: c[4],
                damping: c[5],
            });
        }

        GridModel::new(
            base_mva.ok_or_else(|| err(0, "missing base_mva".into()))?,
            frequency.ok_or_else(|| err(0, "missing frequency_hz".into()))?,
            buses,
            branches,
            generators,
        )
    }

    /// Serializes back to `gridmodel-v1` (comments are not preserved).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{FORMAT_TAG}").unwrap();
        writeln!(s, "base_mva = {}", self.base_mva).unwrap();
        writeln!(s, "frequency_hz = {}", self.frequency_hz).unwrap();
        writeln!(s, "\n[buses]\n# id, type, p_load, q_load, g_shunt, b_shunt, v_set").unwrap();
        for b in &self.buses {
            writeln!(
                s,
                "{}, {}, {}, {}, {}, {}, {}",
                b.id,
                b.kind.as_str(),
                b.p_load,
                b.q_load,
                b.g_shunt,
                b.b_shunt,
                b.v_set
            )
            .unwrap();
        }
        writeln!(s, "\n[branches]\n# id, from, to, r, x, b_charging, zero_seq_factor").unwrap();
        for br in &self.branches {
            writeln!(
                s,
                "{}, {}, {}, {}, {}, {}, {}",
                br.id,
                self.buses[br.from].id,
                self.buses[br.to].id,
                br.r,
                br.x,
                br.b,
                br.zero_seq_factor
            )
            .unwrap();
        }
        writeln!(s, "\n[generators]\n# id, bus, p_gen, h_seconds, xd_prime, damping").unwrap();
        for g in &self.generators {
            writeln!(
                s,
                "{}, {}, {}, {}, {}, {}",
                g.id, self.buses[g.bus].id, g.p_gen, g.h, g.xd_prime, g.damping
            )
            .unwrap();
        }
        s
    }
}

fn parse_floats(cols: &[&str], line: usize) -> Result<Vec<f64>> {
    cols.iter()
        .map(|c| {
            c.parse::<f64>().map_err(|_| Error::GridParse {
                line,
                msg: format!("bad number `{c}`"),
            })
        })
        .collect()
}
