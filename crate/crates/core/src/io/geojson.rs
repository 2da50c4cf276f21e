//! Vector maps as GeoJSON FeatureCollections in the local metric frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::ElementClass;
use crate::error::{Error, Result};
use crate::vectorize::{Geometry, MapElement, VectorMap};

use super::{read_text, write_atomic};

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum Collection {
    FeatureCollection {
        /// Foreign member naming the coordinate frame.
        crs_note: String,
        features: Vec<Feature>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum Feature {
    Feature { geometry: Shape, properties: Properties },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates")]
enum Shape {
    LineString(Vec<[f64; 2]>),
    /// Rings are closed: the first position is repeated at the end.
    Polygon(Vec<Vec<[f64; 2]>>),
}

#[derive(Serialize, Deserialize)]
struct Properties {
    class: ElementClass,
    support_count: usize,
    confidence: f64,
}

pub fn map_to_geojson(map: &VectorMap) -> Result<String> {
    let features = map
        .elements
        .iter()
        .map(|e| Feature::Feature {
            geometry: match &e.geometry {
                Geometry::Polyline(v) => Shape::LineString(v.clone()),
                Geometry::Polygon(_) => Shape::Polygon(vec![e.geometry.curve()]),
            },
            properties: Properties {
                class: e.class,
                support_count: e.support_count,
                confidence: e.confidence,
            },
        })
        .collect();
    let doc = Collection::FeatureCollection {
        crs_note: map.crs_note.clone(),
        features,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn map_from_geojson(text: &str, origin: &Path) -> Result<VectorMap> {
    let bad = |msg: String| Error::format(origin, msg);
    let Collection::FeatureCollection { crs_note, features } =
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let mut map = VectorMap::new(crs_note);
    for (i, Feature::Feature { geometry, properties }) in features.into_iter().enumerate() {
        let geometry = match geometry {
            Shape::LineString(v) => Geometry::Polyline(v),
            Shape::Polygon(rings) => {
                let mut ring = rings
                    .into_iter()
                    .next()
                    .ok_or_else(|| bad(format!("feature {i}: polygon without ring")))?;
                if ring.len() < 4 || ring.first() != ring.last() {
                    return Err(bad(format!("feature {i}: polygon ring is not closed")));
                }
                ring.pop();
                Geometry::Polygon(ring)
            }
        };
        let element = MapElement {
            class: properties.class,
            geometry,
            support_count: properties.support_count,
            confidence: properties.confidence,
        };
        element.validate().map_err(|e| bad(format!("feature {i}: {e}")))?;
        map.elements.push(element);
    }
    Ok(map)
}

pub fn read_map(path: &Path) -> Result<VectorMap> {
    map_from_geojson(&read_text(path)?, path)
}

pub fn write_map(path: &Path, map: &VectorMap) -> Result<()> {
    write_atomic(path, map_to_geojson(map)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::DEFAULT_CRS_NOTE;

    fn sample() -> VectorMap {
        let mut m = VectorMap::new(DEFAULT_CRS_NOTE);
        m.elements.push(MapElement {
            class: ElementClass::PedestrianCrossing,
            geometry: Geometry::Polygon(vec![[0.0, 0.0], [4.0, 0.0], [4.0, 6.1], [0.0, 6.0]]),
            support_count: 812,
            confidence: 1.0,
        });
        m.elements.push(MapElement {
            class: ElementClass::StopLine,
            geometry: Geometry::Polyline(vec![[0.1, 0.2], [0.30000000000000004, 7.0]]),
            support_count: 90,
            confidence: 0.75,
        });
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let text = map_to_geojson(&sample()).unwrap();
        assert!(text.contains("\"FeatureCollection\"") && text.contains("\"LineString\""));
        assert!(text.contains("\"pedestrian_crossing\""));
        assert_eq!(map_from_geojson(&text, Path::new("m")).unwrap(), sample());
    }

    #[test]
    fn polygon_rings_are_closed_on_disk() {
        let v: serde_json::Value = serde_json::from_str(&map_to_geojson(&sample()).unwrap()).unwrap();
        let ring = &v["features"][0]["geometry"]["coordinates"][0];
        assert_eq!(ring.as_array().unwrap().len(), 5);
        assert_eq!(ring[0], ring[4]);
    }

    #[test]
    fn wrong_geometry_for_class_is_rejected() {
        let text = map_to_geojson(&sample())
            .unwrap()
            .replace("\"stop_line\"", "\"pedestrian_crossing\"");
        assert!(matches!(
            map_from_geojson(&text, Path::new("m")),
            Err(Error::Format { .. })
        ));
    }
}
