//! Built-in species, gas and trap presets.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::trap::{IonSpecies, NeutralGas, TrapConfig};

const PRESETS: &str = include_str!("../data/presets.txt");

/// Room temperature used for gas presets (K).
pub const ROOM_TEMPERATURE: f64 = 300.0;

struct Tables {
    species: Vec<IonSpecies>,
    gases: Vec<NeutralGas>,
    traps: Vec<(String, TrapConfig)>,
}

fn fields(rest: &str, line: usize) -> Result<HashMap<&str, &str>> {
    let mut map = HashMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, message: format!("expected key=value, got `{tok}`") })?;
        map.insert(k, v);
    }
    Ok(map)
}

fn num(map: &HashMap<&str, &str>, key: &str, line: usize) -> Result<f64> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Parse { line, message: format!("missing `{key}`") })?;
    raw.parse()
        .map_err(|_| Error::Parse { line, message: format!("`{key}`: not a number: {raw}") })
}

fn name(map: &HashMap<&str, &str>, line: usize) -> Result<String> {
    map.get("name")
        .map(|s| s.to_string())
        .ok_or_else(|| Error::Parse { line, message: "missing `name`".into() })
}

fn parse(text: &str) -> Result<Tables> {
    let mut t = Tables { species: Vec::new(), gases: Vec::new(), traps: Vec::new() };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (kind, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let map = fields(rest, line)?;
        match kind {
            "species" => {
                let charge = num(&map, "charge", line)? as i32;
                t.species.push(IonSpecies::from_neutral_mass(
                    name(&map, line)?,
                    num(&map, "mass_u", line)?,
                    charge,
                ));
            }
            "gas" => t.gases.push(NeutralGas::new(
                name(&map, line)?,
                num(&map, "mass_u", line)?,
                num(&map, "alpha_v", line)?,
                0.0,
                ROOM_TEMPERATURE,
            )),
            "trap" => {
                let trap = TrapConfig::new(
                    num(&map, "r0", line)?,
                    num(&map, "kappa", line)?,
                    num(&map, "omega_rf", line)?,
                    num(&map, "v_rf", line)?,
                    num(&map, "v_ec", line)?,
                )?;
                t.traps.push((name(&map, line)?, trap));
            }
            other => {
                return Err(Error::Parse { line, message: format!("unknown record `{other}`") })
            }
        }
    }
    Ok(t)
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| parse(PRESETS).expect("built-in preset table is malformed"))
}

/// Sympathetically cooled species preset by name (e.g. `"Be+"`).
pub fn species(name: &str) -> Result<IonSpecies> {
    tables()
        .species
        .iter()
        .find(|s| s.name == name)
        .cloned()
        .ok_or_else(|| Error::UnknownSpecies(name.to_string()))
}

/// Gas preset at room temperature and zero pressure.
pub fn gas(name: &str) -> Result<NeutralGas> {
    tables()
        .gases
        .iter()
        .find(|g| g.name == name)
        .cloned()
        .ok_or_else(|| Error::UnknownSpecies(name.to_string()))
}

/// Trap preset: `"be"` or `"ba"`.
pub fn trap(name: &str) -> Result<TrapConfig> {
    tables()
        .traps
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t.clone())
        .ok_or_else(|| Error::InvalidParameter(format!("unknown trap preset `{name}`")))
}

pub fn species_names() -> Vec<&'static str> {
    tables().species.iter().map(|s| s.name.as_str()).collect()
}

pub fn gas_names() -> Vec<&'static str> {
    tables().gases.iter().map(|g| g.name.as_str()).collect()
}

pub fn trap_names() -> Vec<&'static str> {
    tables().traps.iter().map(|(n, _)| n.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parses_and_validates() {
        for n in species_names() {
            species(n).unwrap().validate().unwrap();
        }
        for n in gas_names() {
            gas(n).unwrap().validate().unwrap();
        }
        for n in trap_names() {
            trap(n).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn required_presets_exist() {
        for n in ["Be+", "Ba+", "H2+", "H3+", "HD+", "Ar+"] {
            assert!(species(n).is_ok(), "{n}");
        }
        for n in ["N2", "H2", "HD", "O2", "CO2"] {
            assert!(gas(n).is_ok(), "{n}");
        }
    }

    #[test]
    fn unknown_names_are_errors() {
        assert!(matches!(species("Xx+"), Err(Error::UnknownSpecies(_))));
        assert!(trap("penning").is_err());
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = parse("# c\nspecies name=A mass_u=x charge=1\n").err().unwrap();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
