//! Errors, output files, manifests and path files.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use modnls::modulation::{gen_fbm, gen_linear, ModulationError, ModulationPath};
use modnls::nls_solver::SolverError;
use modnls::nls_torus::TorusError;
use modnls::strichartz_line::LineError;
use modnls::young::YoungError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Already formatted as a status line: a keyword then `key=value` pairs.
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<YoungError> for CliError {
    fn from(e: YoungError) -> Self {
        match e {
            YoungError::Diverged { t } => CliError::Numeric(format!("diverged t={t}")),
            YoungError::NoContraction { t } => CliError::Numeric(format!("no-contraction t={t}")),
            YoungError::NoStabilization { depth, gap } => {
                CliError::Numeric(format!("no-stabilization depth={depth} gap={gap:e}"))
            }
            YoungError::MaxIterations(n) => CliError::Numeric(format!("max-iterations n={n}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ModulationError> for CliError {
    fn from(e: ModulationError) -> Self {
        match e {
            ModulationError::EmbeddingFailed(m) => {
                CliError::Numeric(format!("embedding-failed reason={}", m.replace(' ', "_")))
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<TorusError> for CliError {
    fn from(e: TorusError) -> Self {
        match e {
            TorusError::Modulation(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Young(y) => y.into(),
            SolverError::Torus(t) => t.into(),
            SolverError::Modulation(m) => m.into(),
            SolverError::Config(m) => CliError::Usage(m),
        }
    }
}

impl From<LineError> for CliError {
    fn from(e: LineError) -> Self {
        match e {
            LineError::Guard { t, ratio } => CliError::Numeric(format!("guard t={t} ratio={ratio:e}")),
            LineError::NoContraction { halvings } => {
                CliError::Numeric(format!("no-contraction halvings={halvings}"))
            }
            LineError::Modulation(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Floats in CSV files carry 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved parameters; valid input for `--config`.
    pub config: Value,
    pub threads: Option<usize>,
    /// Input file path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<OutputRecord>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Final status line of the run.
    pub status: String,
}

/// Everything a command touches on disk, plus phase timers.
pub struct Run {
    pub dir: PathBuf,
    /// Primary output file when `--out` named a file.
    pub primary: Option<PathBuf>,
    outputs: Vec<PathBuf>,
    pub inputs: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

impl Run {
    /// An `--out` with an extension names the primary file; otherwise it is
    /// the output directory.
    pub fn new(out: &Path) -> Result<Self> {
        let (dir, primary) = if out.extension().is_some() {
            let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            (dir.to_path_buf(), Some(out.to_path_buf()))
        } else {
            (out.to_path_buf(), None)
        };
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            primary,
            outputs: Vec::new(),
            inputs: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    /// The primary file, or `default_name` inside the output directory.
    pub fn primary_or(&self, default_name: &str) -> PathBuf {
        self.primary.clone().unwrap_or_else(|| self.dir.join(default_name))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    pub fn csv(&mut self, path: &Path) -> Result<csv::Writer<File>> {
        self.outputs.push(path.to_path_buf());
        Ok(csv::WriterBuilder::new().flexible(true).from_path(path)?)
    }

    pub fn json(&mut self, path: &Path, value: &impl Serialize) -> Result<()> {
        self.outputs.push(path.to_path_buf());
        std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn finish(self, command: &str, config: &impl Serialize, threads: Option<usize>, status: &str) -> Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(OutputRecord {
                    file: p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                    sha256: file_digest(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: "modnls".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config)?,
            threads,
            inputs: self.inputs,
            outputs,
            timings: self.timings,
            status: status.into(),
        };
        let mut bytes = Vec::new();
        manifest.serialize(&mut serde_json::Serializer::with_formatter(&mut bytes, Pretty17::default()))?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join(MANIFEST_NAME), bytes)?;
        Ok(manifest)
    }
}

/// Pretty JSON with every float written with 17 significant digits.
#[derive(Default)]
struct Pretty17(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Pretty17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{}", fmt(value))
    }

    fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Read a config file. A manifest is accepted too, in which case its
/// resolved config is used and its command must match.
pub fn load_config(path: &Path, command: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?;
    if value.get("tool").and_then(Value::as_str) == Some("modnls") {
        let recorded = value.get("command").and_then(Value::as_str).unwrap_or("");
        if recorded != command {
            return Err(usage(format!("manifest is for `{recorded}`, not `{command}`")));
        }
        return value.get("config").cloned().ok_or_else(|| usage("manifest has no config"));
    }
    if !value.is_object() {
        return Err(usage("config must be a JSON object"));
    }
    Ok(value)
}

/// Overlay `flags` on `base`; flags win.
pub fn merge(base: Option<Value>, flags: Value) -> Value {
    let mut merged = match base {
        Some(Value::Object(m)) => m,
        _ => Default::default(),
    };
    if let Value::Object(f) = flags {
        merged.extend(f);
    }
    Value::Object(merged)
}

pub fn write_path_csv(run: &mut Run, path: &Path, w: &ModulationPath) -> Result<()> {
    let mut out = run.csv(path)?;
    out.write_record(["t", "w"])?;
    for (i, v) in w.values().iter().enumerate() {
        out.write_record([fmt(w.time(i)), fmt(*v)])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a `t,w` CSV on a uniform grid.
pub fn read_path_csv(path: &Path) -> Result<ModulationPath> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| usage(format!("cannot read path {}: {e}", path.display())))?;
    let mut ts = Vec::new();
    let mut ws = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| usage(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| usage(format!("bad row in {}", path.display())))
        };
        ts.push(parse(0)?);
        ws.push(parse(1)?);
    }
    if ts.len() < 2 {
        return Err(usage(format!("{} has fewer than 2 samples", path.display())));
    }
    let dt = ts[1] - ts[0];
    let span = ts[ts.len() - 1] - ts[0];
    let uniform = ts
        .iter()
        .enumerate()
        .all(|(i, t)| (t - ts[0] - i as f64 * dt).abs() <= 1e-9 * span.abs().max(1.0));
    if !uniform {
        return Err(usage(format!("{} is not on a uniform time grid", path.display())));
    }
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(ModulationPath::new(ts[0], dt, ws, label)?)
}

/// Modulation given as `fbm:H`, `linear:S` or `file:PATH`.
pub fn build_modulation(spec: &str, samples: usize, t_end: f64, seed: u64, run: &mut Run) -> Result<ModulationPath> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("modulation `{spec}` must look like fbm:H, linear:S or file:PATH")))?;
    let number = || -> Result<f64> { arg.parse().map_err(|_| usage(format!("bad number in modulation `{spec}`"))) };
    if samples < 2 {
        return Err(usage("path_samples must be >= 2"));
    }
    let dt = t_end / (samples - 1) as f64;
    match kind {
        "fbm" => Ok(gen_fbm(number()?, samples, dt, seed)?),
        "linear" => Ok(gen_linear(number()?, samples, dt)?),
        "file" => {
            let p = Path::new(arg);
            run.record_input(p)?;
            let w = read_path_csv(p)?;
            if w.t0() > 0.0 || w.end() < t_end - 1e-12 {
                return Err(usage(format!("path in {arg} does not cover [0, {t_end}]")));
            }
            Ok(w)
        }
        _ => Err(usage(format!("unknown modulation kind `{kind}`"))),
    }
}
