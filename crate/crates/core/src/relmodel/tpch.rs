//! TPC-H table schemas and the fixed vocabularies used by the generator.

use super::Schema;
use crate::value::DataType::{self, Date, Float64, Int64, Text};

pub const TABLES: [&str; 8] = [
    "lineitem", "orders", "customer", "part", "supplier", "partsupp", "nation", "region",
];

/// Base cardinalities of the variable-size tables at scale factor 1.
pub const BASE_ROWS: [(&str, u64); 6] = [
    ("lineitem", 6_000_000),
    ("orders", 1_500_000),
    ("customer", 150_000),
    ("part", 200_000),
    ("partsupp", 800_000),
    ("supplier", 10_000),
];

const LINEITEM: &[(&str, DataType)] = &[
    ("l_orderkey", Int64),
    ("l_partkey", Int64),
    ("l_suppkey", Int64),
    ("l_linenumber", Int64),
    ("l_quantity", Float64),
    ("l_extendedprice", Float64),
    ("l_discount", Float64),
    ("l_tax", Float64),
    ("l_returnflag", Text),
    ("l_linestatus", Text),
    ("l_shipdate", Date),
    ("l_commitdate", Date),
    ("l_receiptdate", Date),
    ("l_shipinstruct", Text),
    ("l_shipmode", Text),
    ("l_comment", Text),
];

const ORDERS: &[(&str, DataType)] = &[
    ("o_orderkey", Int64),
    ("o_custkey", Int64),
    ("o_orderstatus", Text),
    ("o_totalprice", Float64),
    ("o_orderdate", Date),
    ("o_orderpriority", Text),
    ("o_clerk", Text),
    ("o_shippriority", Int64),
    ("o_comment", Text),
];

const CUSTOMER: &[(&str, DataType)] = &[
    ("c_custkey", Int64),
    ("c_name", Text),
    ("c_address", Text),
    ("c_nationkey", Int64),
    ("c_phone", Text),
    ("c_acctbal", Float64),
    ("c_mktsegment", Text),
    ("c_comment", Text),
];

const PART: &[(&str, DataType)] = &[
    ("p_partkey", Int64),
    ("p_name", Text),
    ("p_mfgr", Text),
    ("p_brand", Text),
    ("p_type", Text),
    ("p_size", Int64),
    ("p_container", Text),
    ("p_retailprice", Float64),
    ("p_comment", Text),
];

const SUPPLIER: &[(&str, DataType)] = &[
    ("s_suppkey", Int64),
    ("s_name", Text),
    ("s_address", Text),
    ("s_nationkey", Int64),
    ("s_phone", Text),
    ("s_acctbal", Float64),
    ("s_comment", Text),
];

const PARTSUPP: &[(&str, DataType)] = &[
    ("ps_partkey", Int64),
    ("ps_suppkey", Int64),
    ("ps_availqty", Int64),
    ("ps_supplycost", Float64),
    ("ps_comment", Text),
];

const NATION: &[(&str, DataType)] = &[
    ("n_nationkey", Int64),
    ("n_name", Text),
    ("n_regionkey", Int64),
    ("n_comment", Text),
];

const REGION: &[(&str, DataType)] = &[
    ("r_regionkey", Int64),
    ("r_name", Text),
    ("r_comment", Text),
];

/// Schema of one TPC-H table, `None` for unknown names.
pub fn schema(table: &str) -> Option<Schema> {
    let cols = match table.to_ascii_lowercase().as_str() {
        "lineitem" => LINEITEM,
        "orders" => ORDERS,
        "customer" => CUSTOMER,
        "part" => PART,
        "supplier" => SUPPLIER,
        "partsupp" => PARTSUPP,
        "nation" => NATION,
        "region" => REGION,
        _ => return None,
    };
    Some(Schema::of(cols))
}

pub(crate) const NATIONS: [(&str, i64); 25] = [
    ("ALGERIA", 0),
    ("ARGENTINA", 1),
    ("BRAZIL", 1),
    ("CANADA", 1),
    ("EGYPT", 4),
    ("ETHIOPIA", 0),
    ("FRANCE", 3),
    ("GERMANY", 3),
    ("INDIA", 2),
    ("INDONESIA", 2),
    ("IRAN", 4),
    ("IRAQ", 4),
    ("JAPAN", 2),
    ("JORDAN", 4),
    ("KENYA", 0),
    ("MOROCCO", 0),
    ("MOZAMBIQUE", 0),
    ("PERU", 1),
    ("CHINA", 2),
    ("ROMANIA", 3),
    ("SAUDI ARABIA", 4),
    ("VIETNAM", 2),
    ("RUSSIA", 3),
    ("UNITED KINGDOM", 3),
    ("UNITED STATES", 1),
];

pub(crate) const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];

pub(crate) const COLORS: [&str; 92] = [
    "almond", "antique", "aquamarine", "azure", "beige", "bisque", "black", "blanched", "blue",
    "blush", "brown", "burlywood", "burnished", "chartreuse", "chiffon", "chocolate", "coral",
    "cornflower", "cornsilk", "cream", "cyan", "dark", "deep", "dim", "dodger", "drab", "firebrick",
    "floral", "forest", "frosted", "gainsboro", "ghost", "goldenrod", "green", "grey", "honeydew",
    "hot", "indian", "ivory", "khaki", "lace", "lavender", "lawn", "lemon", "light", "lime", "linen",
    "magenta", "maroon", "medium", "metallic", "midnight", "mint", "misty", "moccasin", "navajo",
    "navy", "olive", "orange", "orchid", "pale", "papaya", "peach", "peru", "pink", "plum", "powder",
    "puff", "purple", "red", "rose", "rosy", "royal", "saddle", "salmon", "sandy", "seashell",
    "sienna", "sky", "slate", "smoke", "snow", "spring", "steel", "tan", "thistle", "tomato",
    "turquoise", "violet", "wheat", "white", "yellow",
];

pub(crate) const SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"];

pub(crate) const PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];

pub(crate) const SHIP_INSTRUCT: [&str; 4] = [
    "DELIVER IN PERSON",
    "COLLECT COD",
    "NONE",
    "TAKE BACK RETURN",
];

pub(crate) const SHIP_MODES: [&str; 7] = ["REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"];

pub(crate) const TYPE_S1: [&str; 6] = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"];
pub(crate) const TYPE_S2: [&str; 5] = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"];
pub(crate) const TYPE_S3: [&str; 5] = ["TIN", "NICKEL", "BRASS", "STEEL", "COPPER"];

pub(crate) const CONTAINER_S1: [&str; 5] = ["SM", "LG", "MED", "JUMBO", "WRAP"];
pub(crate) const CONTAINER_S2: [&str; 8] = ["CASE", "BOX", "BAG", "JAR", "PKG", "PACK", "CAN", "DRUM"];

pub(crate) const WORDS: [&str; 24] = [
    "furiously", "quickly", "carefully", "blithely", "slyly", "ironic", "final", "regular",
    "express", "pending", "special", "bold", "even", "silent", "unusual", "accounts", "deposits",
    "packages", "requests", "theodolites", "pinto", "beans", "foxes", "instructions",
];
