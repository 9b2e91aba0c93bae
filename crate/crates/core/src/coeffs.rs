//! Registry of symmetric splitting methods with published coefficients.
//!
//! A method is stored as the palindromic kernel of its `a`/`b` coefficient
//! sequences, each kept as a decimal string of up to 40 significant digits.
//! Numeric consumers re-parse the strings at whatever precision they need;
//! nothing in the registry bakes in binary rounding.
//!
//! Stage-count conventions for an `s`-stage ABA composition
//! `A(a1) B(b1) A(a2) ... B(bs) A(a_{s+1})`:
//! the expanded `a` sequence has `s + 1` entries with `a_{s+2-i} = a_i`, the
//! expanded `b` sequence has `s` entries with `b_{s+1-i} = b_i`. Exactly one
//! of the two sequences has a repeated middle pair, the other a singleton
//! middle entry, depending on the parity of `s`.

use crate::prec::{BigFloat, ParseBigFloatError, DEFAULT_DIGITS};
use once_cell::sync::Lazy;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoeffsError {
    #[error("unknown method id {0:?}")]
    UnknownMethod(String),
    #[error("kernel lengths ({a_len} a, {b_len} b) inconsistent with stage count {stages}")]
    KernelMismatch {
        a_len: usize,
        b_len: usize,
        stages: usize,
    },
    #[error("order tuple {0:?} must be non-empty, even and non-increasing")]
    BadOrder(Vec<u32>),
    #[error(transparent)]
    BadCoefficient(#[from] ParseBigFloatError),
    #[error("invalid solution file: {0}")]
    BadSolutionFile(String),
}

/// Composition family. BAB methods are stored as `(s+1)`-stage ABA schemes
/// with a leading zero `a` coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Aba,
    Bab,
    Abah,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodKind::Aba => write!(f, "ABA"),
            MethodKind::Bab => write!(f, "BAB"),
            MethodKind::Abah => write!(f, "ABAH"),
        }
    }
}

/// One splitting coefficient: the authoritative decimal string plus cached
/// native and 50-digit parses.
#[derive(Debug, Clone)]
pub struct CoefficientValue {
    decimal: String,
    working: f64,
    exact: BigFloat,
}

impl CoefficientValue {
    pub fn new(decimal: &str) -> Result<Self, CoeffsError> {
        let exact = BigFloat::parse(decimal, DEFAULT_DIGITS)?;
        Ok(CoefficientValue {
            decimal: decimal.trim().to_string(),
            working: exact.to_f64(),
            exact,
        })
    }

    pub fn decimal(&self) -> &str {
        &self.decimal
    }

    pub fn working(&self) -> f64 {
        self.working
    }

    /// The coefficient at the default 50-digit verification precision.
    pub fn exact(&self) -> &BigFloat {
        &self.exact
    }

    /// Re-parse the decimal string at an arbitrary precision.
    pub fn at_digits(&self, digits: usize) -> BigFloat {
        BigFloat::parse(&self.decimal, digits).expect("stored decimal is valid")
    }
}

/// Node vector `c_i = a_1 + ... + a_i`, `i = 1..s+1`; `c_{s+1} = 1` for
/// consistent methods.
#[derive(Debug, Clone)]
pub struct NodeVector {
    pub c: Vec<BigFloat>,
}

/// A named splitting scheme: kind, claimed generalized order, stage count and
/// the palindromic coefficient kernels.
#[derive(Debug, Clone)]
pub struct SplittingMethod {
    id: String,
    kind: MethodKind,
    order: Vec<u32>,
    stages: usize,
    a_kernel: Vec<CoefficientValue>,
    b_kernel: Vec<CoefficientValue>,
    cubic_condition: bool,
}

/// Kernel lengths demanded by an `s`-stage palindromic ABA layout.
pub fn kernel_lengths(stages: usize) -> (usize, usize) {
    (stages / 2 + 1, (stages + 1) / 2)
}

impl SplittingMethod {
    pub fn new(
        id: &str,
        kind: MethodKind,
        order: &[u32],
        stages: usize,
        a_kernel: Vec<CoefficientValue>,
        b_kernel: Vec<CoefficientValue>,
        cubic_condition: bool,
    ) -> Result<Self, CoeffsError> {
        if order.is_empty()
            || order.iter().any(|r| r % 2 != 0 || *r == 0)
            || order.windows(2).any(|w| w[0] < w[1])
        {
            return Err(CoeffsError::BadOrder(order.to_vec()));
        }
        let (p, q) = kernel_lengths(stages);
        if stages == 0 || a_kernel.len() != p || b_kernel.len() != q {
            return Err(CoeffsError::KernelMismatch {
                a_len: a_kernel.len(),
                b_len: b_kernel.len(),
                stages,
            });
        }
        Ok(SplittingMethod {
            id: id.to_string(),
            kind,
            order: order.to_vec(),
            stages,
            a_kernel,
            b_kernel,
            cubic_condition,
        })
    }

    /// Build a BAB scheme as its equivalent `(s+1)`-stage ABA representation
    /// with `a_1 = 0`. `a_kernel` here is the BAB kernel without the implied
    /// leading zero.
    pub fn bab(
        id: &str,
        order: &[u32],
        bab_stages: usize,
        a_kernel: Vec<CoefficientValue>,
        b_kernel: Vec<CoefficientValue>,
        cubic_condition: bool,
    ) -> Result<Self, CoeffsError> {
        let mut a = vec![CoefficientValue::new("0")?];
        a.extend(a_kernel);
        SplittingMethod::new(id, MethodKind::Bab, order, bab_stages + 1, a, b_kernel, cubic_condition)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn a_kernel(&self) -> &[CoefficientValue] {
        &self.a_kernel
    }

    pub fn b_kernel(&self) -> &[CoefficientValue] {
        &self.b_kernel
    }

    pub fn cubic_condition(&self) -> bool {
        self.cubic_condition
    }

    /// Kernel index feeding expanded `a[i]`, `i = 0..=stages`.
    pub fn a_index(&self, i: usize) -> usize {
        i.min(self.stages - i)
    }

    /// Kernel index feeding expanded `b[i]`, `i = 0..stages-1`.
    pub fn b_index(&self, i: usize) -> usize {
        i.min(self.stages - 1 - i)
    }

    /// Full left-right palindromic coefficient sequences at the requested
    /// precision: `s + 1` a-values and `s` b-values.
    pub fn expand(&self, digits: usize) -> (Vec<BigFloat>, Vec<BigFloat>) {
        let ak: Vec<BigFloat> = self.a_kernel.iter().map(|v| v.at_digits(digits)).collect();
        let bk: Vec<BigFloat> = self.b_kernel.iter().map(|v| v.at_digits(digits)).collect();
        let a = (0..=self.stages).map(|i| ak[self.a_index(i)].clone()).collect();
        let b = (0..self.stages).map(|i| bk[self.b_index(i)].clone()).collect();
        (a, b)
    }

    /// Expanded sequences in native precision, for the integration engine.
    pub fn expand_f64(&self) -> (Vec<f64>, Vec<f64>) {
        let a = (0..=self.stages)
            .map(|i| self.a_kernel[self.a_index(i)].working())
            .collect();
        let b = (0..self.stages)
            .map(|i| self.b_kernel[self.b_index(i)].working())
            .collect();
        (a, b)
    }

    /// Prefix sums of the expanded a-sequence.
    pub fn nodes(&self, digits: usize) -> NodeVector {
        let (a, _) = self.expand(digits);
        let mut c = Vec::with_capacity(a.len());
        let mut acc = BigFloat::zero(digits);
        for ai in &a {
            acc = acc + ai;
            c.push(acc.clone());
        }
        NodeVector { c }
    }
}

macro_rules! method {
    ($id:literal, $kind:expr, [$($r:literal),+], $s:literal, cubic $cubic:literal,
     a = [$($a:literal),+], b = [$($b:literal),+]) => {
        SplittingMethod::new(
            $id,
            $kind,
            &[$($r),+],
            $s,
            vec![$(CoefficientValue::new($a).unwrap()),+],
            vec![$(CoefficientValue::new($b).unwrap()),+],
            $cubic,
        )
        .unwrap()
    };
}

/// Built-in methods.
///
/// ABA104, ABA864, ABA1064, ABAH844, ABAH864 and ABAH1064 carry the published
/// 40-digit tables. ABA82 and ABA84 are not printed anywhere at full
/// precision; their kernels were produced by this crate's solver (coarse grid
/// plus Newton polish at 60 digits, see `solver` tests that re-derive them)
/// and frozen here. ABA82 is the unique all-positive solution of the (8,2)
/// conditions — equivalently the 4-node Gauss-Legendre quadrature on [0,1] —
/// and ABA84 is the minimum-norm real solution of the (8,4) conditions.
static REGISTRY: Lazy<Vec<SplittingMethod>> = Lazy::new(|| {
    vec![
        method!("LEAPFROG", MethodKind::Aba, [2, 2], 1, cubic false,
            a = ["0.5"], b = ["1"]),
        method!("ABA82", MethodKind::Aba, [8, 2], 4, cubic false,
            a = [
                "0.06943184420297371238802675555359524745214",
                "0.2605776340045981552106403648947824089476",
                "0.3399810435848562648026657591032446872006"
            ],
            b = [
                "0.1739274225687269286865319746109997036177",
                "0.3260725774312730713134680253890002963823"
            ]),
        method!("ABA84", MethodKind::Aba, [8, 4], 5, cubic false,
            a = [
                "0.07534696026989288841652780368347446437265",
                "0.5179168546882567823007739784963156443238",
                "-0.0932638149581496707173017821797901086965"
            ],
            b = [
                "0.1902259393736766192452307627384538974612",
                "0.8465240704435262570550805446467758341771",
                "-1.073500019634405752600622614770459463277"
            ]),
        method!("ABA104", MethodKind::Aba, [10, 4], 7, cubic false,
            a = [
                "0.04706710064597250612947887637243678556564",
                "0.1847569354170881069247376193702560968574",
                "0.2827060056798362053243616565541452479160",
                "-0.01453004174289681837857815229683813033908"
            ],
            b = [
                "0.1188819173681970199453503950853885936957",
                "0.2410504605515015657441667865901651105675",
                "-0.2732866667053238060543113981664559460630",
                "0.8267085775712504407295884329818044835997"
            ]),
        method!("ABA864", MethodKind::Aba, [8, 6, 4], 7, cubic false,
            a = [
                "0.0711334264982231177779387300061549964174",
                "0.241153427956640098736487795326289649618",
                "0.521411761772814789212136078067994229991",
                "-0.333698616227678005726562603400438876027"
            ],
            b = [
                "0.183083687472197221961703757166430291072",
                "0.310782859898574869507522291054262796375",
                "-0.0265646185119588006972121379164987592663",
                // b4 re-polished by Newton on the full (8,6,4) system at 70
                // digits; the widely circulated table drops the '6' at
                // significant digit 31, which breaks the b consistency sum
                // at the 1e-31 level
                "0.0653961422823734184559721793916113436371"
            ]),
        method!("ABA1064", MethodKind::Aba, [10, 6, 4], 8, cubic false,
            a = [
                "0.03809449742241219545697532230863756534060",
                "0.1452987161169137492940200726606637497442",
                "0.2076276957255412507162056113249882065158",
                "0.4359097036515261592231548624010651844006",
                "-0.6538612258327867093807117373907094120024"
            ],
            b = [
                "0.09585888083707521061077150377145884776921",
                "0.2044461531429987806805077839164344779763",
                "0.2170703479789911017143385924306336714532",
                "-0.01737538195906509300561788011852699719871"
            ]),
        method!("ABAH844", MethodKind::Abah, [8, 4], 6, cubic true,
            a = [
                "0.2741402689434018761640565440378637101205",
                "-0.1075684384401642306251105297063236526845",
                "-0.04801850259060169269119541715084750653701",
                "0.7628933441747280943044988056386148982021"
            ],
            b = [
                "0.6408857951625127177322491164716010349386",
                "-0.8585754489567828565881283246356000103664",
                "0.7176896537942701388558792081639989754277"
            ]),
        method!("ABAH864", MethodKind::Abah, [8, 6, 4], 8, cubic true,
            a = [
                "0.06810235651658372084723976682061164571212",
                "0.2511360387221033233072829580455350680082",
                "-0.07507264957216562516006821767601620052338",
                "-0.009544719701745007811488218957217113269121",
                "0.5307579480704471776340674235341732001443"
            ],
            b = [
                "0.1684432593618954534310382697756917558148",
                "0.4243177173742677224300351657407231801453",
                "-0.5858109694681756812309015355404036521923",
                "0.4930499927320125053698281000239887162321"
            ]),
        method!("ABAH1064", MethodKind::Abah, [10, 6, 4], 9, cubic true,
            a = [
                "0.04731908697653382270404371796320813250988",
                "0.2651105235748785159539480036185693201078",
                "-0.009976522883811240843267468164812380613143",
                "-0.05992919973494155126395247987729676004016",
                "0.2574761120673404534492282264603316880356"
            ],
            b = [
                "0.1196884624585322035312864297489892143852",
                "0.3752955855379374250420128537687503199451",
                "-0.4684593418325993783650820409805381740605",
                "0.3351397342755897010393098942949569049275",
                "0.2766711191210800975049457263356834696055"
            ]),
    ]
});

/// All built-in methods, ordered by stage count within each family.
pub fn registry() -> &'static [SplittingMethod] {
    &REGISTRY
}

pub fn registry_lookup(id: &str) -> Result<&'static SplittingMethod, CoeffsError> {
    let wanted = id.trim().to_ascii_uppercase();
    REGISTRY
        .iter()
        .find(|m| m.id == wanted)
        .ok_or(CoeffsError::UnknownMethod(id.to_string()))
}

/// Plain-text catalog of every registry method, one coefficient per line at
/// 40 digits. The format is a stable golden-file contract.
pub fn catalog_text() -> String {
    let mut out = String::new();
    for m in registry() {
        let order = m
            .order
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!(
            "id {} kind {} order ({}) stages {} cubic {}\n",
            m.id, m.kind, order, m.stages, m.cubic_condition
        ));
        for (i, v) in m.a_kernel.iter().enumerate() {
            out.push_str(&format!("  a{} {}\n", i + 1, v.exact().to_decimal_string(40)));
        }
        for (i, v) in m.b_kernel.iter().enumerate() {
            out.push_str(&format!("  b{} {}\n", i + 1, v.exact().to_decimal_string(40)));
        }
    }
    out
}

/// Parse a solver solution file back into a method. The format is the one
/// emitted by `solver::write_solution_text`: `key value` lines with `a1..ap`,
/// `b1..bq` coefficients; `#` starts a comment.
pub fn parse_solution_text(text: &str) -> Result<SplittingMethod, CoeffsError> {
    let mut id = String::from("SOLVED");
    let mut kind = MethodKind::Aba;
    let mut order: Vec<u32> = Vec::new();
    let mut stages = 0usize;
    let mut cubic = false;
    let mut a: Vec<(usize, CoefficientValue)> = Vec::new();
    let mut b: Vec<(usize, CoefficientValue)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| CoeffsError::BadSolutionFile(format!("bad line {line:?}")))?;
        let value = value.trim();
        match key {
            "id" => id = value.to_string(),
            "kind" => {
                kind = match value {
                    "ABA" => MethodKind::Aba,
                    "BAB" => MethodKind::Bab,
                    "ABAH" => MethodKind::Abah,
                    _ => return Err(CoeffsError::BadSolutionFile(format!("bad kind {value:?}"))),
                }
            }
            "order" => {
                order = value
                    .split(',')
                    .map(|t| t.trim().parse::<u32>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| CoeffsError::BadSolutionFile(format!("bad order {value:?}")))?;
            }
            "stages" => {
                stages = value
                    .parse()
                    .map_err(|_| CoeffsError::BadSolutionFile(format!("bad stages {value:?}")))?;
            }
            "cubic" => {
                cubic = value == "true";
            }
            "residual_max" => {}
            k if k.starts_with('a') || k.starts_with('b') => {
                let idx: usize = k[1..]
                    .parse()
                    .map_err(|_| CoeffsError::BadSolutionFile(format!("bad key {k:?}")))?;
                let cv = CoefficientValue::new(value)?;
                if k.starts_with('a') {
                    a.push((idx, cv));
                } else {
                    b.push((idx, cv));
                }
            }
            _ => return Err(CoeffsError::BadSolutionFile(format!("unknown key {key:?}"))),
        }
    }
    a.sort_by_key(|(i, _)| *i);
    b.sort_by_key(|(i, _)| *i);
    SplittingMethod::new(
        &id,
        kind,
        &order,
        stages,
        a.into_iter().map(|(_, v)| v).collect(),
        b.into_iter().map(|(_, v)| v).collect(),
        cubic,
    )
}
