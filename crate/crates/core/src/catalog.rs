//! Product catalogs: loading, validation and the blank-row cleaning pass.
//!
//! A catalog file is UTF-8, delimiter-separated, with a header row. Which
//! header names feed which product fields is configured through
//! [`CatalogFormat`], so exports with localized column names load without
//! renaming. Quoting follows the usual CSV rules: a field may be wrapped in
//! double quotes, and a literal quote inside a quoted field is doubled.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single catalog entry. Text fields are kept exactly as read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub ean: String,
    pub category: String,
    pub subcategory: String,
    pub variety: String,
    pub brand: String,
    pub name: String,
    pub legal_name: String,
    pub ingredients: String,
}

impl Product {
    /// True when name, legal name and ingredients are all empty after trimming.
    pub fn is_blank(&self) -> bool {
        [&self.name, &self.legal_name, &self.ingredients]
            .iter()
            .all(|f| f.trim().is_empty())
    }
}

/// Column mapping and delimiter for catalog files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogFormat {
    pub delimiter: char,
    pub ean: String,
    pub category: String,
    pub subcategory: String,
    pub variety: String,
    pub brand: String,
    pub name: String,
    pub legal_name: String,
    pub ingredients: String,
}

impl Default for CatalogFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            ean: "ean".into(),
            category: "category".into(),
            subcategory: "subcategory".into(),
            variety: "variety".into(),
            brand: "brand".into(),
            name: "name".into(),
            legal_name: "legal_name".into(),
            ingredients: "ingredients".into(),
        }
    }
}

impl CatalogFormat {
    fn delimiter_byte(&self) -> Result<u8> {
        if self.delimiter.is_ascii() && self.delimiter != '"' && self.delimiter != '\n' {
            Ok(self.delimiter as u8)
        } else {
            Err(Error::Config(format!(
                "catalog delimiter {:?} must be a single ASCII character other than quote or newline",
                self.delimiter
            )))
        }
    }

    /// Field names in [`Product`] order, paired with the configured header.
    fn columns(&self) -> [(&'static str, &str); 8] {
        [
            ("ean", &self.ean),
            ("category", &self.category),
            ("subcategory", &self.subcategory),
            ("variety", &self.variety),
            ("brand", &self.brand),
            ("name", &self.name),
            ("legal_name", &self.legal_name),
            ("ingredients", &self.ingredients),
        ]
    }
}

/// Bijection between variety strings and ids `0..V`, ids assigned in
/// ascending lexicographic order of the string.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VarietyIndex {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl VarietyIndex {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        let names: Vec<String> = sorted.into_iter().collect();
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    products: Vec<Product>,
    varieties: VarietyIndex,
}

impl Catalog {
    /// Validates EANs (non-blank, unique) and builds the variety index.
    pub fn new(products: Vec<Product>) -> Result<Self> {
        if products.is_empty() {
            return Err(Error::Empty("catalog"));
        }
        let mut seen = HashSet::with_capacity(products.len());
        for (i, p) in products.iter().enumerate() {
            let ean = p.ean.trim();
            if ean.is_empty() {
                return Err(Error::Catalog(format!("product #{} has no EAN", i + 1)));
            }
            if !seen.insert(ean) {
                return Err(Error::Catalog(format!("duplicate EAN {ean:?}")));
            }
        }
        let varieties = VarietyIndex::from_names(products.iter().map(|p| p.variety.clone()));
        Ok(Self {
            products,
            varieties,
        })
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn varieties(&self) -> &VarietyIndex {
        &self.varieties
    }

    pub fn n_varieties(&self) -> usize {
        self.varieties.len()
    }

    /// Variety id of every product, in catalog order.
    pub fn labels(&self) -> Vec<usize> {
        self.products
            .iter()
            .map(|p| self.varieties.id(&p.variety).expect("index covers all varieties"))
            .collect()
    }

    pub fn into_products(self) -> Vec<Product> {
        self.products
    }
}

pub fn load_catalog(path: impl AsRef<Path>, fmt: &CatalogFormat) -> Result<Catalog> {
    let file = std::fs::File::open(path)?;
    Catalog::new(read_products(file, fmt, true)?)
}

pub fn parse_catalog(data: &[u8], fmt: &CatalogFormat) -> Result<Catalog> {
    Catalog::new(read_products(data, fmt, true)?)
}

/// Reads product rows. With `require_variety == false` the variety column may
/// be absent from the header, in which case every variety is left empty.
pub fn read_products<R: Read>(
    reader: R,
    fmt: &CatalogFormat,
    require_variety: bool,
) -> Result<Vec<Product>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(fmt.delimiter_byte()?)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(reader);

    let mut records = rdr.byte_records();
    let header = match records.next() {
        None => return Err(Error::Empty("catalog file")),
        Some(h) => h?,
    };
    let header: Vec<String> = header
        .iter()
        .enumerate()
        .map(|(i, f)| {
            std::str::from_utf8(f)
                .map(|s| s.trim_start_matches('\u{feff}').to_string())
                .map_err(|_| Error::Record {
                    row: 1,
                    msg: format!("header column {} is not valid UTF-8", i + 1),
                })
        })
        .collect::<Result<_>>()?;

    let mut positions: [Option<usize>; 8] = [None; 8];
    let mut missing = Vec::new();
    for (slot, (field, column)) in fmt.columns().iter().enumerate() {
        let hits: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.as_str() == *column)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [] if *field == "variety" && !require_variety => {}
            [] => missing.push(format!("{column:?} ({field})")),
            [i] => positions[slot] = Some(*i),
            _ => {
                return Err(Error::Record {
                    row: 1,
                    msg: format!("header names column {column:?} more than once"),
                })
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Record {
            row: 1,
            msg: format!("header is missing columns: {}", missing.join(", ")),
        });
    }

    let mut products = Vec::new();
    let mut seen_ean: HashMap<String, u64> = HashMap::new();
    for rec in records {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|f| f.is_empty()) {
            // blank line
            continue;
        }
        if rec.len() != header.len() {
            let offending: Vec<String> = if rec.len() < header.len() {
                header[rec.len()..]
                    .iter()
                    .map(|h| format!("{h:?}"))
                    .collect()
            } else {
                (header.len() + 1..=rec.len())
                    .map(|i| format!("#{i}"))
                    .collect()
            };
            let what = if rec.len() < header.len() {
                "missing"
            } else {
                "unexpected"
            };
            return Err(Error::Record {
                row,
                msg: format!(
                    "expected {} fields, found {}; {what} columns: {}",
                    header.len(),
                    rec.len(),
                    offending.join(", ")
                ),
            });
        }

        let mut fields: [String; 8] = Default::default();
        let mut bad_utf8 = Vec::new();
        for (slot, pos) in positions.iter().enumerate() {
            if let Some(pos) = *pos {
                match std::str::from_utf8(&rec[pos]) {
                    Ok(s) => fields[slot] = s.to_string(),
                    Err(_) => bad_utf8.push(format!("{:?}", header[pos])),
                }
            }
        }
        if !bad_utf8.is_empty() {
            return Err(Error::Record {
                row,
                msg: format!("invalid UTF-8 in columns: {}", bad_utf8.join(", ")),
            });
        }
        let [ean, category, subcategory, variety, brand, name, legal_name, ingredients] = fields;

        let key = ean.trim().to_string();
        if key.is_empty() {
            return Err(Error::Record {
                row,
                msg: "missing EAN".into(),
            });
        }
        if let Some(first) = seen_ean.insert(key.clone(), row) {
            return Err(Error::Record {
                row,
                msg: format!("duplicate EAN {key:?} (first seen on row {first})"),
            });
        }
        if require_variety && variety.trim().is_empty() {
            return Err(Error::Record {
                row,
                msg: "missing variety".into(),
            });
        }
        products.push(Product {
            ean,
            category,
            subcategory,
            variety,
            brand,
            name,
            legal_name,
            ingredients,
        });
    }
    if products.is_empty() {
        return Err(Error::Empty("catalog (no data rows)"));
    }
    Ok(products)
}

/// Writes products with the given column mapping, header first.
pub fn write_products<W: std::io::Write>(
    writer: W,
    products: &[Product],
    fmt: &CatalogFormat,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(fmt.delimiter_byte()?)
        .from_writer(writer);
    w.write_record(fmt.columns().iter().map(|(_, c)| *c))?;
    for p in products {
        w.write_record([
            &p.ean,
            &p.category,
            &p.subcategory,
            &p.variety,
            &p.brand,
            &p.name,
            &p.legal_name,
            &p.ingredients,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Drops products whose name, legal name and ingredients are all blank and
/// rebuilds the variety index over the survivors.
pub fn clean_catalog(c: &Catalog) -> Result<Catalog> {
    let kept: Vec<Product> = c
        .products
        .iter()
        .filter(|p| !p.is_blank())
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::Empty("catalog after removing blank products"));
    }
    Catalog::new(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "ean,category,subcategory,variety,brand,name,legal_name,ingredients\n";

    fn parse(body: &str) -> Result<Catalog> {
        parse_catalog(format!("{HEADER}{body}").as_bytes(), &CatalogFormat::default())
    }

    pub(crate) fn product(ean: &str, variety: &str, name: &str, legal: &str, ingr: &str) -> Product {
        Product {
            ean: ean.into(),
            category: String::new(),
            subcategory: String::new(),
            variety: variety.into(),
            brand: String::new(),
            name: name.into(),
            legal_name: legal.into(),
            ingredients: ingr.into(),
        }
    }

    #[test]
    fn loads_table_row() {
        let c = parse(
            "8410000000001,Fresh,Vegetables,Greens and Vegetables,Acme,Raw leek,Leek,Leek\n",
        )
        .unwrap();
        let p = &c.products()[0];
        assert_eq!(p.name, "Raw leek");
        assert_eq!(p.legal_name, "Leek");
        assert_eq!(p.ingredients, "Leek");
        assert_eq!(p.variety, "Greens and Vegetables");
        assert_eq!(c.n_varieties(), 1);
        assert_eq!(c.varieties().id("Greens and Vegetables"), Some(0));
    }

    #[test]
    fn variety_ids_are_lexicographic() {
        let c = parse(
            "1,a,b,Ron,x,Golden Ron,Ron,\n2,a,b,Greens and Vegetables,x,Raw leek,Leek,Leek\n",
        )
        .unwrap();
        assert_eq!(c.varieties().id("Greens and Vegetables"), Some(0));
        assert_eq!(c.varieties().id("Ron"), Some(1));
        assert_eq!(c.labels(), vec![1, 0]);
    }

    #[test]
    fn text_is_not_trimmed() {
        let c = parse("1,a,b,V,x,  spaced  ,\"quoted, comma\",\n").unwrap();
        assert_eq!(c.products()[0].name, "  spaced  ");
        assert_eq!(c.products()[0].legal_name, "quoted, comma");
    }

    #[test]
    fn duplicate_ean_reports_row() {
        let err = parse("1,a,b,V,x,n,,\n1,a,b,V,x,m,,\n").unwrap_err();
        match err {
            Error::Record { row, msg } => {
                assert_eq!(row, 3);
                assert!(msg.contains("duplicate"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_ean_reports_row() {
        let err = parse("1,a,b,V,x,n,,\n  ,a,b,V,x,m,,\n").unwrap_err();
        assert!(matches!(err, Error::Record { row: 3, .. }), "{err}");
    }

    #[test]
    fn short_row_lists_missing_columns() {
        let err = parse("1,a,b,V,x,n\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"legal_name\""), "{msg}");
        assert!(msg.contains("\"ingredients\""), "{msg}");
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(parse_catalog(b"", &CatalogFormat::default()).is_err());
        assert!(parse_catalog(HEADER.as_bytes(), &CatalogFormat::default()).is_err());
    }

    #[test]
    fn header_mismatch_rejected() {
        let err = parse_catalog(b"ean,name\n1,x\n", &CatalogFormat::default()).unwrap_err();
        assert!(err.to_string().contains("missing columns"), "{err}");
    }

    #[test]
    fn custom_mapping_and_delimiter() {
        let fmt = CatalogFormat {
            delimiter: ';',
            ean: "EAN".into(),
            category: "Categoria".into(),
            subcategory: "Subcategoria".into(),
            variety: "Variedad".into(),
            brand: "Marca".into(),
            name: "Nombre".into(),
            legal_name: "Denominacion".into(),
            ingredients: "Ingredientes".into(),
        };
        let data = "Nombre;EAN;Variedad;Categoria;Subcategoria;Marca;Denominacion;Ingredientes;Extra\n\
                    Ron dorado;77;Ron;Bebidas;Licores;M;Ron;;z\n";
        let c = parse_catalog(data.as_bytes(), &fmt).unwrap();
        assert_eq!(c.products()[0].ean, "77");
        assert_eq!(c.products()[0].name, "Ron dorado");
    }

    #[test]
    fn unlabeled_rows_allowed_when_requested() {
        let data = "ean,category,subcategory,brand,name,legal_name,ingredients\n1,a,b,c,Leek,,\n";
        let ps = read_products(data.as_bytes(), &CatalogFormat::default(), false).unwrap();
        assert_eq!(ps[0].variety, "");
        assert!(read_products(data.as_bytes(), &CatalogFormat::default(), true).is_err());
    }

    #[test]
    fn clean_removes_all_blank_rows() {
        let c = Catalog::new(vec![
            product("1", "A", "", "", "  "),
            product("2", "B", "", "", "Leek"),
            product("3", "C", "Oil", "", ""),
        ])
        .unwrap();
        let cleaned = clean_catalog(&c).unwrap();
        let eans: Vec<_> = cleaned.products().iter().map(|p| p.ean.as_str()).collect();
        assert_eq!(eans, vec!["2", "3"]);
        assert_eq!(cleaned.varieties().names(), &["B".to_string(), "C".to_string()]);
        assert_eq!(clean_catalog(&cleaned).unwrap(), cleaned);
    }

    #[test]
    fn clean_to_nothing_is_an_error() {
        let c = Catalog::new(vec![product("1", "A", " ", "\t", "")]).unwrap();
        assert!(clean_catalog(&c).is_err());
    }

    #[test]
    fn write_then_read() {
        let products = vec![
            product("1", "A", "Raw \"leek\"", "Leek, fresh", "Leek"),
            product("2", "B", "x", "", ""),
        ];
        let mut buf = Vec::new();
        write_products(&mut buf, &products, &CatalogFormat::default()).unwrap();
        let back = read_products(buf.as_slice(), &CatalogFormat::default(), true).unwrap();
        assert_eq!(back, products);
    }
}
