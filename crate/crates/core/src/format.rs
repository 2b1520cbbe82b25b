//! Text serialization of released structures.
//!
//! A structure file is UTF-8 text:
//!
//! ```text
//! # dp-kde structure v1
//! kind=l1                 l1 | lpp | l2
//! epsilon=1               total budget
//! noisy=true
//! n=2
//! dim=1                   number of coordinate trees
//! bound=1                 per-tree value bound R (R' for l2)
//! layers=2
//! p=2                     lpp only
//! d_in=3                  l2 only: input dimension,
//! k=382                   target dimension,
//! alpha=0.5               distortion,
//! embedding_seed=42       matrix seed (the matrix is regenerated on load),
//! shift=0.25              and common coordinate shift
//! input_shift=1;-2        optional per-coordinate shift applied to inputs
//! tree 0
//! c,1,<values of layer 1>
//! c,2,<values of layer 2>
//! s,1,<values of layer 1>
//! s,2,<values of layer 2>
//! tree 1
//! ...
//! ```
//!
//! For `l1` trees every layer is written as a `c` (count) line and then, after
//! all count lines, an `s` (sum) line. For `lpp` trees each layer is one `s`
//! line holding `p + 1` power sums per node, `q` innermost. Numbers use the
//! shortest decimal representation that round-trips exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::l1tree::NoisyL1Tree;
use crate::l2kde::{EmbeddingSpec, L2KdeStructure};
use crate::lptree::{HighDimLpTree, NoisyLpTree};
use crate::multidim::HighDimTree;
use crate::noise::{PrivacyBudget, RngSeed};
use crate::tree::{layer_offset, TreeConfig};

pub const MAGIC: &str = "# dp-kde structure v1";

/// A released structure of any kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    L1(HighDimTree),
    Lpp(HighDimLpTree),
    L2(L2KdeStructure),
}

/// A kernel structure plus the input translation applied before building.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub kernel: Kernel,
    /// Added to every query coordinate before it reaches the kernel.
    pub input_shift: Option<Vec<f64>>,
}

impl Structure {
    pub fn new(kernel: Kernel) -> Self {
        Self {
            kernel,
            input_shift: None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.kernel {
            Kernel::L1(_) => "l1",
            Kernel::Lpp(_) => "lpp",
            Kernel::L2(_) => "l2",
        }
    }

    /// Dimension of query points.
    pub fn dim(&self) -> usize {
        match &self.kernel {
            Kernel::L1(t) => t.dim(),
            Kernel::Lpp(t) => t.dim(),
            Kernel::L2(s) => s.embedding().d_in(),
        }
    }

    pub fn total_budget(&self) -> PrivacyBudget {
        match &self.kernel {
            Kernel::L1(t) => t.total_budget(),
            Kernel::Lpp(t) => t.total_budget(),
            Kernel::L2(s) => s.inner().total_budget(),
        }
    }

    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        match &self.kernel {
            Kernel::L1(t) => t.noise_families(),
            Kernel::Lpp(t) => t.noise_families(),
            Kernel::L2(s) => s.noise_families(),
        }
    }

    /// Config shared by the coordinate trees.
    pub fn tree_config(&self) -> &TreeConfig {
        match &self.kernel {
            Kernel::L1(t) => t.config(),
            Kernel::Lpp(t) => t.config(),
            Kernel::L2(s) => s.inner().config(),
        }
    }

    pub fn is_noisy(&self) -> bool {
        match &self.kernel {
            Kernel::L1(t) => t.trees()[0].is_noisy(),
            Kernel::Lpp(t) => t.trees()[0].is_noisy(),
            Kernel::L2(s) => s.inner().trees()[0].is_noisy(),
        }
    }

    /// Total stored node entries across all trees.
    pub fn node_count(&self) -> usize {
        let per_tree = self.tree_config().node_count();
        match &self.kernel {
            Kernel::L1(t) => per_tree * t.dim(),
            Kernel::Lpp(t) => per_tree * t.dim(),
            Kernel::L2(s) => per_tree * s.inner().dim(),
        }
    }

    pub fn query(&self, y: &[f64]) -> Result<f64> {
        let shifted;
        let y = match &self.input_shift {
            Some(shift) => {
                if shift.len() != y.len() {
                    return Err(Error::DimensionMismatch {
                        expected: shift.len(),
                        got: y.len(),
                    });
                }
                shifted = y.iter().zip(shift).map(|(a, b)| a + b).collect::<Vec<_>>();
                &shifted
            }
            None => y,
        };
        match &self.kernel {
            Kernel::L1(t) => t.query(y),
            Kernel::Lpp(t) => t.query(y),
            Kernel::L2(s) => s.query(y),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(self.to_text().as_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cfg = self.tree_config();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "kind={}", self.kind());
        let _ = writeln!(s, "epsilon={}", self.total_budget().epsilon());
        let _ = writeln!(s, "noisy={}", self.is_noisy());
        let _ = writeln!(s, "n={}", cfg.n());
        let _ = writeln!(s, "bound={}", cfg.bound());
        let _ = writeln!(s, "layers={}", cfg.layers());
        if let Kernel::Lpp(t) = &self.kernel {
            let _ = writeln!(s, "p={}", t.p());
        }
        if let Kernel::L2(l2) = &self.kernel {
            let e = l2.embedding();
            let _ = writeln!(s, "d_in={}", e.d_in());
            let _ = writeln!(s, "k={}", e.k());
            let _ = writeln!(s, "alpha={}", e.alpha());
            let _ = writeln!(s, "embedding_seed={}", e.seed().0);
            let _ = writeln!(s, "shift={}", l2.shift());
        }
        if let Some(shift) = &self.input_shift {
            let joined: Vec<String> = shift.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "input_shift={}", joined.join(";"));
        }
        match &self.kernel {
            Kernel::L1(t) => write_l1_trees(&mut s, t),
            Kernel::Lpp(t) => {
                let _ = writeln!(s, "dim={}", t.dim());
                for (i, tree) in t.trees().iter().enumerate() {
                    let _ = writeln!(s, "tree {i}");
                    let width = tree.p() as usize + 1;
                    write_layers(&mut s, "s", tree.sums(), cfg.layers(), width);
                }
            }
            Kernel::L2(l2) => write_l1_trees(&mut s, l2.inner()),
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Format(format!("missing `{MAGIC}` header")));
        }
        let mut header = BTreeMap::new();
        let mut body = Vec::new();
        for line in lines.by_ref() {
            if line.starts_with("tree ") {
                body.push(line);
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line `{line}`")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        body.extend(lines);
        let h = Header(header);

        let budget = PrivacyBudget::pure(h.num("epsilon")?)?;
        let noisy: bool = h.parse("noisy")?;
        let n: usize = h.parse("n")?;
        let bound: f64 = h.num("bound")?;
        let layers: u32 = h.parse("layers")?;
        let dim: usize = h.parse("dim")?;
        if dim == 0 {
            return Err(Error::Format("dim must be positive".into()));
        }
        let part = crate::noise::split_budget(budget, dim)[0];
        let config = TreeConfig::with_layers(n, bound, layers, part)?;
        let blocks = split_trees(&body, dim)?;

        let kernel = match h.get("kind")? {
            "l1" => Kernel::L1(read_l1_trees(&blocks, config, noisy, budget)?),
            "lpp" => {
                let p: u32 = h.parse("p")?;
                let width = p as usize + 1;
                let trees = blocks
                    .iter()
                    .map(|b| {
                        let sums = read_layers(b, "s", layers, width)?;
                        NoisyLpTree::from_parts(config, p, noisy, sums)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Kernel::Lpp(HighDimLpTree::from_trees(budget, trees)?)
            }
            "l2" => {
                let k: usize = h.parse("k")?;
                let embedding = EmbeddingSpec::with_dimension(
                    h.parse("d_in")?,
                    k,
                    h.num("alpha")?,
                    RngSeed(h.parse("embedding_seed")?),
                )?;
                let inner = read_l1_trees(&blocks, config, noisy, budget)?;
                Kernel::L2(L2KdeStructure::from_parts(
                    embedding,
                    h.num("shift")?,
                    bound,
                    inner,
                )?)
            }
            other => return Err(Error::Format(format!("unknown kind `{other}`"))),
        };
        let input_shift = match h.0.get("input_shift") {
            Some(v) => Some(
                v.split(';')
                    .map(|x| {
                        x.parse()
                            .map_err(|_| Error::Format(format!("bad input_shift `{v}`")))
                    })
                    .collect::<Result<Vec<f64>>>()?,
            ),
            None => None,
        };
        Ok(Self {
            kernel,
            input_shift,
        })
    }
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("missing header field `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("bad value `{v}` for `{key}`")))
    }

    fn num(&self, key: &str) -> Result<f64> {
        self.parse(key)
    }
}

fn write_l1_trees(s: &mut String, t: &HighDimTree) {
    let layers = t.config().layers();
    let _ = writeln!(s, "dim={}", t.dim());
    for (i, tree) in t.trees().iter().enumerate() {
        let _ = writeln!(s, "tree {i}");
        write_layers(s, "c", tree.counts(), layers, 1);
        write_layers(s, "s", tree.sums(), layers, 1);
    }
}

fn write_layers(s: &mut String, tag: &str, values: &[f64], layers: u32, width: usize) {
    for layer in 1..=layers {
        let lo = layer_offset(layer) * width;
        let hi = layer_offset(layer + 1) * width;
        let _ = write!(s, "{tag},{layer}");
        for v in &values[lo..hi] {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
}

fn split_trees<'a>(body: &[&'a str], dim: usize) -> Result<Vec<Vec<&'a str>>> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    for line in body {
        if let Some(idx) = line.strip_prefix("tree ") {
            if idx.trim().parse::<usize>().ok() != Some(blocks.len()) {
                return Err(Error::Format(format!("unexpected `{line}`")));
            }
            blocks.push(Vec::new());
        } else if !line.trim().is_empty() {
            blocks
                .last_mut()
                .ok_or_else(|| Error::Format("values before first tree".into()))?
                .push(line);
        }
    }
    if blocks.len() != dim {
        return Err(Error::Format(format!(
            "expected {dim} trees, found {}",
            blocks.len()
        )));
    }
    Ok(blocks)
}

fn read_layers(block: &[&str], tag: &str, layers: u32, width: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(layer_offset(layers + 1) * width);
    let mut next_layer = 1;
    for line in block {
        let mut cells = line.split(',');
        if cells.next() != Some(tag) {
            continue;
        }
        let layer: u32 = cells
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad layer line `{}`", truncate(line))))?;
        if layer != next_layer {
            return Err(Error::Format(format!(
                "expected {tag} layer {next_layer}, got {layer}"
            )));
        }
        let before = values.len();
        for c in cells {
            values.push(
                c.parse().map_err(|_| {
                    Error::Format(format!("bad number `{c}` in {tag} layer {layer}"))
                })?,
            );
        }
        let expected = (1usize << (layer - 1)) * width;
        if values.len() - before != expected {
            return Err(Error::Format(format!(
                "{tag} layer {layer}: expected {expected} values, got {}",
                values.len() - before
            )));
        }
        next_layer += 1;
    }
    if next_layer != layers + 1 {
        return Err(Error::Format(format!(
            "{tag}: expected {layers} layers, got {}",
            next_layer - 1
        )));
    }
    Ok(values)
}

fn read_l1_trees(
    blocks: &[Vec<&str>],
    config: TreeConfig,
    noisy: bool,
    budget: PrivacyBudget,
) -> Result<HighDimTree> {
    let trees = blocks
        .iter()
        .map(|b| {
            let counts = read_layers(b, "c", config.layers(), 1)?;
            let sums = read_layers(b, "s", config.layers(), 1)?;
            NoisyL1Tree::from_parts(config, noisy, counts, sums)
        })
        .collect::<Result<Vec<_>>>()?;
    HighDimTree::from_trees(budget, trees)
}

fn truncate(line: &str) -> &str {
    &line[..line.len().min(40)]
}
