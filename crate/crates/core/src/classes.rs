use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static road-marking classes carried by the vector map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementClass {
    LaneDivider,
    StopLine,
    PedestrianCrossing,
}

impl ElementClass {
    pub const ALL: [ElementClass; 3] = [
        ElementClass::LaneDivider,
        ElementClass::StopLine,
        ElementClass::PedestrianCrossing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElementClass::LaneDivider => "lane_divider",
            ElementClass::StopLine => "stop_line",
            ElementClass::PedestrianCrossing => "pedestrian_crossing",
        }
    }

    /// Crossings are areas; dividers and stop lines are lines.
    pub fn is_polygon(self) -> bool {
        self == ElementClass::PedestrianCrossing
    }

    /// Short column header used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            ElementClass::LaneDivider => "Div.",
            ElementClass::StopLine => "St.",
            ElementClass::PedestrianCrossing => "Ped.",
        }
    }
}

impl fmt::Display for ElementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ElementClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown element class {s:?}")))
    }
}

/// One row of a class table. `class == None` marks background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
    /// Gray level used when the mask is stored as an image.
    pub gray: u8,
}

impl ClassEntry {
    pub fn class(&self) -> Option<ElementClass> {
        self.name.parse().ok()
    }
}

/// Mapping between label ids, element classes and mask gray levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub entries: Vec<ClassEntry>,
}

pub const BACKGROUND_ID: u8 = 0;
pub const BACKGROUND_NAME: &str = "background";

impl Default for ClassTable {
    fn default() -> Self {
        let entry = |id, name: &str, gray| ClassEntry {
            id,
            name: name.to_string(),
            gray,
        };
        Self {
            entries: vec![
                entry(0, BACKGROUND_NAME, 0),
                entry(1, "lane_divider", 80),
                entry(2, "stop_line", 160),
                entry(3, "pedestrian_crossing", 240),
            ],
        }
    }
}

impl ClassTable {
    pub fn validate(&self) -> Result<()> {
        let bg = self.entries.iter().find(|e| e.id == BACKGROUND_ID);
        if bg.map(|e| e.name.as_str()) != Some(BACKGROUND_NAME) {
            return Err(Error::InvalidConfig("class table must map id 0 to background".into()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.id != BACKGROUND_ID && e.class().is_none() {
                return Err(Error::InvalidConfig(format!("unknown class name {:?}", e.name)));
            }
            if self.entries[..i].iter().any(|o| o.id == e.id || o.gray == e.gray) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate id or gray level in class table at {:?}",
                    e.name
                )));
            }
        }
        Ok(())
    }

    pub fn entry(&self, id: u8) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Class for a label id; `Ok(None)` for background.
    pub fn class_of(&self, id: u8) -> Result<Option<ElementClass>> {
        if id == BACKGROUND_ID {
            return Ok(None);
        }
        self.entry(id).map(ClassEntry::class).ok_or(Error::UnknownLabel(id))
    }

    pub fn id_of(&self, class: ElementClass) -> Option<u8> {
        self.entries.iter().find(|e| e.class() == Some(class)).map(|e| e.id)
    }

    pub fn id_for_gray(&self, gray: u8) -> Option<u8> {
        self.entries.iter().find(|e| e.gray == gray).map(|e| e.id)
    }

    pub fn classes(&self) -> impl Iterator<Item = (u8, ElementClass)> + '_ {
        self.entries.iter().filter_map(|e| e.class().map(|c| (e.id, c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_round_trips_names() {
        let t = ClassTable::default();
        t.validate().unwrap();
        for c in ElementClass::ALL {
            let id = t.id_of(c).unwrap();
            assert_eq!(t.class_of(id).unwrap(), Some(c));
            assert_eq!(c.name().parse::<ElementClass>().unwrap(), c);
        }
        assert_eq!(t.class_of(0).unwrap(), None);
        assert!(matches!(t.class_of(9), Err(Error::UnknownLabel(9))));
    }

    #[test]
    fn table_without_background_is_invalid() {
        let mut t = ClassTable::default();
        t.entries.remove(0);
        assert!(t.validate().is_err());
        let mut t = ClassTable::default();
        t.entries[2].gray = 80;
        assert!(t.validate().is_err());
    }
}
