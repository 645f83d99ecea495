//! Coarse grouping of the 28 land-cover categories and its one-hot code.

use std::io::Read;

use crate::error::{Error, Result};

pub const VEG_GROUPS: usize = 6;

/// Group per category 1..=28: forest 1, savanna/grassland 2, shrubland 3,
/// tundra/desert/polar 4, cropland/pasture 5, water/urban 6.
const DEFAULT_GROUPS: [u8; 28] = [
    1, 1, 1, 1, 1, 1, 1, // 1-7 primary forest
    2, 2, 2, // 8-10 savanna, grassland
    3, 3, // 11-12 shrubland
    4, 4, 4, // 13-15 tundra, desert, polar
    1, 1, 1, 1, 1, 1, 1, // 16-22 secondary forest
    6, // 23 water
    5, 5, 5, 5, // 24-27 cropland, pasture
    6, // 28 urban
];

/// Category-to-group table. Group 0 marks a category as unknown, which
/// encodes to an all-zero block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VegetationMap {
    groups: [u8; 28],
}

impl Default for VegetationMap {
    fn default() -> Self {
        Self { groups: DEFAULT_GROUPS }
    }
}

impl VegetationMap {
    /// Reads a `veg_category,group` CSV; unlisted categories keep their
    /// default group.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut map = Self::default();
        let mut reader = csv::Reader::from_reader(input);
        for row in reader.records() {
            let row = row.map_err(|e| Error::Encoding(e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<u8> {
                row.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse { line, detail: format!("bad mapping row {row:?}") })
            };
            let (cat, group) = (field(0)?, field(1)?);
            if !(1..=28).contains(&cat) || group as usize > VEG_GROUPS {
                return Err(Error::Encoding(format!("mapping {cat} -> {group} out of range")));
            }
            map.groups[cat as usize - 1] = group;
        }
        Ok(map)
    }

    pub fn group(&self, category: u8) -> Result<u8> {
        if !(1..=28).contains(&category) {
            return Err(Error::Encoding(format!("vegetation category {category} not in 1..=28")));
        }
        Ok(self.groups[category as usize - 1])
    }

    pub fn encode(&self, category: u8) -> Result<[f64; VEG_GROUPS]> {
        let mut out = [0.0; VEG_GROUPS];
        let g = self.group(category)?;
        if g > 0 {
            out[g as usize - 1] = 1.0;
        }
        Ok(out)
    }
}

/// One-hot group code under the default table.
pub fn encode_vegetation(category: u8) -> Result<[f64; VEG_GROUPS]> {
    VegetationMap::default().encode(category)
}
