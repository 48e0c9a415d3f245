//! Plain-text checkpoint format with a versioned header, the architecture
//! block, and per-tensor row-major values. Values are written with Rust's
//! shortest round-trip float formatting, so a save/load cycle reproduces the
//! parameters bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::policy::mlp::Activation;
use crate::policy::men::{GaitInput, MenConfig, MenPolicy, POLICY_OUTPUT_DIM};
use crate::policy::PolicyError;

const HEADER: &str = "menpolicy-v1";

pub fn checkpoint_to_string(policy: &MenPolicy) -> String {
    let cfg = &policy.config;
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "experts {}", cfg.num_experts);
    let _ = writeln!(out, "expert_hidden {}", join(&cfg.expert_hidden));
    let _ = writeln!(out, "gating_hidden {}", join(&cfg.gating_hidden));
    let _ = writeln!(out, "activation {}", cfg.activation.name());
    let _ = writeln!(out, "gait_input {}", cfg.gait_input.name());
    let _ = writeln!(
        out,
        "output_scale {}",
        cfg.output_scale.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    );
    let _ = writeln!(out, "head_scale {}", cfg.expert_head_scale);
    let _ = writeln!(out, "seed {}", cfg.seed);
    for (name, w, b) in policy.tensors() {
        let _ = writeln!(out, "tensor {name}.weight {} {}", w.nrows(), w.ncols());
        let mut line = String::new();
        for r in 0..w.nrows() {
            for c in 0..w.ncols() {
                if !line.is_empty() {
                    line.push(' ');
                }
                let _ = write!(line, "{}", w[(r, c)]);
            }
        }
        let _ = writeln!(out, "{line}");
        let _ = writeln!(out, "tensor {name}.bias {} 1", b.len());
        let bias_line =
            b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{bias_line}");
    }
    let _ = writeln!(out, "end");
    out
}

pub fn save_checkpoint(policy: &MenPolicy, path: &Path) -> Result<(), PolicyError> {
    fs::write(path, checkpoint_to_string(policy))
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), source: e })
}

fn join(values: &[usize]) -> String {
    if values.is_empty() {
        "none".to_string()
    } else {
        values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn parse_sizes(s: &str, line: usize) -> Result<Vec<usize>, PolicyError> {
    if s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.trim().parse::<usize>().map_err(|_| PolicyError::Parse {
                line,
                message: format!("invalid layer size `{v}`"),
            })
        })
        .collect()
}

pub fn load_checkpoint(path: &Path) -> Result<MenPolicy, PolicyError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), source: e })?;
    checkpoint_from_str(&text)
}

pub fn checkpoint_from_str(text: &str) -> Result<MenPolicy, PolicyError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, message: String| PolicyError::Parse { line: line + 1, message };

    let (ln, header) = lines
        .next()
        .ok_or_else(|| err(0, "empty checkpoint".into()))?;
    if header.trim() != HEADER {
        return Err(err(ln, format!("expected header `{HEADER}`, found `{header}`")));
    }

    let mut experts = None;
    let mut expert_hidden = None;
    let mut gating_hidden = None;
    let mut activation = None;
    let mut gait_input = None;
    let mut output_scale = None;
    let mut head_scale = None;
    let mut seed = None;
    let mut tensor_lines: Vec<(usize, String)> = Vec::new();
    let mut in_tensors = false;
    let mut saw_end = false;
    for (ln, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "end" {
            saw_end = true;
            break;
        }
        if line.starts_with("tensor ") {
            in_tensors = true;
        }
        if in_tensors {
            tensor_lines.push((ln, line.to_string()));
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| err(ln, format!("expected `key value`, found `{line}`")))?;
        match key {
            "experts" => {
                experts = Some(value.parse::<usize>().map_err(|_| {
                    err(ln, format!("invalid expert count `{value}`"))
                })?)
            }
            "expert_hidden" => expert_hidden = Some(parse_sizes(value, ln + 1)?),
            "gating_hidden" => gating_hidden = Some(parse_sizes(value, ln + 1)?),
            "activation" => {
                activation = Some(Activation::from_name(value).map_err(|_| {
                    err(ln, format!("unknown activation `{value}`"))
                })?)
            }
            "gait_input" => {
                gait_input = Some(GaitInput::from_name(value).map_err(|_| {
                    err(ln, format!("unknown gait input `{value}`"))
                })?)
            }
            "output_scale" => {
                let vals: Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                let vals = vals.map_err(|_| err(ln, format!("invalid output scale `{value}`")))?;
                if vals.len() != POLICY_OUTPUT_DIM {
                    return Err(err(
                        ln,
                        format!("output scale needs {POLICY_OUTPUT_DIM} entries, found {}", vals.len()),
                    ));
                }
                let mut arr = [0.0; POLICY_OUTPUT_DIM];
                arr.copy_from_slice(&vals);
                output_scale = Some(arr);
            }
            "head_scale" => {
                head_scale = Some(value.parse::<f64>().map_err(|_| {
                    err(ln, format!("invalid head scale `{value}`"))
                })?)
            }
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|_| {
                    err(ln, format!("invalid seed `{value}`"))
                })?)
            }
            other => return Err(err(ln, format!("unknown config key `{other}`"))),
        }
    }
    if !saw_end {
        return Err(PolicyError::Parse {
            line: text.lines().count(),
            message: "missing `end` marker; checkpoint truncated".into(),
        });
    }

    let config = MenConfig {
        num_experts: experts
            .ok_or_else(|| err(0, "missing `experts` in config block".into()))?,
        expert_hidden: expert_hidden
            .ok_or_else(|| err(0, "missing `expert_hidden`".into()))?,
        gating_hidden: gating_hidden
            .ok_or_else(|| err(0, "missing `gating_hidden`".into()))?,
        activation: activation.ok_or_else(|| err(0, "missing `activation`".into()))?,
        gait_input: gait_input.ok_or_else(|| err(0, "missing `gait_input`".into()))?,
        output_scale: output_scale.ok_or_else(|| err(0, "missing `output_scale`".into()))?,
        expert_head_scale: head_scale
            .ok_or_else(|| err(0, "missing `head_scale`".into()))?,
        seed: seed.ok_or_else(|| err(0, "missing `seed`".into()))?,
    };
    let mut policy = MenPolicy::new(config);

    // expected tensor inventory
    let expected: Vec<(String, usize, usize)> = policy
        .tensors()
        .iter()
        .flat_map(|(name, w, b)| {
            vec![
                (format!("{name}.weight"), w.nrows(), w.ncols()),
                (format!("{name}.bias"), b.len(), 1),
            ]
        })
        .collect();

    let mut filled = std::collections::BTreeSet::new();
    let mut it = tensor_lines.into_iter();
    while let Some((ln, line)) = it.next() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(err(ln, format!("expected `tensor name rows cols`, found `{line}`")));
        }
        let name = parts[1];
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| err(ln, format!("invalid row count `{}`", parts[2])))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| err(ln, format!("invalid column count `{}`", parts[3])))?;
        let Some((_, er, ec)) = expected.iter().find(|(n, _, _)| n == name) else {
            if name.starts_with("expert") {
                let found = name
                    .strip_prefix("expert")
                    .and_then(|r| r.split('.').next())
                    .and_then(|e| e.parse::<usize>().ok());
                if let Some(ei) = found {
                    return Err(err(
                        ln,
                        format!(
                            "tensor `{name}` references expert {ei}, but the config declares {} experts",
                            policy.config.num_experts
                        ),
                    ));
                }
            }
            return Err(err(ln, format!("unexpected tensor `{name}`")));
        };
        if (rows, cols) != (*er, *ec) {
            return Err(err(
                ln,
                format!("tensor `{name}` has shape {rows}x{cols}, expected {er}x{ec}"),
            ));
        }
        let (vln, values_line) = it
            .next()
            .ok_or_else(|| err(ln, format!("tensor `{name}` is missing its value line")))?;
        let values: Result<Vec<f64>, _> =
            values_line.split_whitespace().map(|v| v.parse::<f64>()).collect();
        let values =
            values.map_err(|_| err(vln, format!("invalid value in tensor `{name}`")))?;
        if values.len() != rows * cols {
            return Err(err(
                vln,
                format!("tensor `{name}` has {} values, expected {}", values.len(), rows * cols),
            ));
        }
        let base = name.rsplit_once('.').unwrap();
        let (w, b) = policy
            .tensor_mut(base.0)
            .ok_or_else(|| err(ln, format!("unexpected tensor `{name}`")))?;
        match base.1 {
            "weight" => {
                for r in 0..rows {
                    for c in 0..cols {
                        w[(r, c)] = values[r * cols + c];
                    }
                }
            }
            "bias" => {
                for r in 0..rows {
                    b[r] = values[r];
                }
            }
            other => return Err(err(ln, format!("unknown tensor suffix `{other}`"))),
        }
        filled.insert(name.to_string());
    }
    for (name, _, _) in &expected {
        if !filled.contains(name) {
            return Err(PolicyError::Parse {
                line: 0,
                message: format!(
                    "missing tensor `{name}`: expected {} tensors, found {}",
                    expected.len(),
                    filled.len()
                ),
            });
        }
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GeneralizedTime, RelativeState};
    use rand::{Rng, SeedableRng};

    fn random_policy(seed: u64) -> MenPolicy {
        let mut policy = MenPolicy::new(MenConfig {
            num_experts: 3,
            expert_hidden: vec![8, 8],
            gating_hidden: vec![6],
            seed,
            ..MenConfig::default()
        });
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for e in &mut policy.experts {
            let last = e.layers.len() - 1;
            e.layers[last].weight.apply(|v| *v = rng.random::<f64>() - 0.5);
            e.layers[last].bias.apply(|v| *v = rng.random::<f64>() - 0.5);
        }
        policy
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let policy = random_policy(5);
        let text = checkpoint_to_string(&policy);
        let loaded = checkpoint_from_str(&text).unwrap();
        for ((_, w1, b1), (_, w2, b2)) in policy.tensors().iter().zip(loaded.tensors()) {
            assert_eq!(**w1, *w2, "weights must round-trip bit-exactly");
            assert_eq!(**b1, *b2);
        }
        // forward outputs identical on random inputs
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(321);
        for _ in 0..100 {
            let gt = GeneralizedTime {
                phases: [rng.random(), rng.random()],
                phase_rates: [rng.random::<f64>() * 3.0, 0.0],
                bumps: [rng.random(), rng.random()],
            };
            let xr = RelativeState {
                values: nalgebra::Vector6::from_fn(|_, _| rng.random::<f64>() - 0.5),
            };
            let a = policy.forward(&gt, &xr).blended;
            let b = loaded.forward(&gt, &xr).blended;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn wrong_expert_count_is_reported() {
        let mut policy = random_policy(6);
        policy.config.num_experts = 3; // keep as created
        let text = checkpoint_to_string(&policy);
        // splice in a tensor for an expert index the config does not declare
        let extra = "tensor expert7.0.weight 1 1
0.5
";
        let text = text.replace("end", &format!("{extra}end"));
        let e = checkpoint_from_str(&text).unwrap_err();
        let msg = e.to_string();
        assert!(
            msg.contains("expert 7") && msg.contains("declares 3 experts"),
            "error should name expected/found counts: {msg}"
        );
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let policy = random_policy(7);
        let text = checkpoint_to_string(&policy);
        let cut = text.len() / 2;
        let truncated = &text[..cut];
        assert!(checkpoint_from_str(truncated).is_err());
    }

    #[test]
    fn missing_tensor_is_reported() {
        let policy = random_policy(8);
        let text = checkpoint_to_string(&policy);
        // drop one tensor block (two lines) but keep the end marker
        let lines: Vec<&str> = text.lines().collect();
        let idx = lines.iter().position(|l| l.starts_with("tensor expert1.0.bias")).unwrap();
        let mut kept: Vec<&str> = Vec::new();
        for (i, l) in lines.iter().enumerate() {
            if i == idx || i == idx + 1 {
                continue;
            }
            kept.push(l);
        }
        let e = checkpoint_from_str(&kept.join("\n")).unwrap_err();
        assert!(e.to_string().contains("missing tensor"));
    }
}
