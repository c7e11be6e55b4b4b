//! Buyer/supplier aggregates, buyer maxima, risk factors, and assembly of
//! the 19-column labeled feature table.
//!
//! All aggregates are windowed by the calendar year of the contract start
//! date and keyed by normalized buyer and supplier names.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::contracts::{FeatureSchema, Label, ProcedureType};
use crate::dataset::Dataset;
use crate::ingestion::LabeledContract;

/// Weight of the contract-count share in the favoritism score.
pub const FAV_COUNT_WEIGHT: f64 = 0.33;
/// Weight of the spending share in the favoritism score.
pub const FAV_SPENDING_WEIGHT: f64 = 0.66;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("buyer `{buyer}` has a zero maximum in {year}")]
    DegenerateBuyer { buyer: String, year: i32 },
    #[error("no aggregate for contract {index}")]
    MissingAggregate { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub buyer: String,
    pub supplier: String,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BuyerKey {
    pub buyer: String,
    pub year: i32,
}

impl PairKey {
    pub fn buyer_key(&self) -> BuyerKey {
        BuyerKey { buyer: self.buyer.clone(), year: self.year }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAggregate {
    pub total_contracts: u32,
    pub total_spending: f64,
    pub single_bidder_contracts: u32,
    pub active_weeks: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuyerAggregate {
    pub max_contracts: u32,
    pub max_spending: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskFactors {
    pub rad: f64,
    pub fav: f64,
    pub cpw: f64,
    pub spw: f64,
}

fn pair_key(c: &LabeledContract) -> PairKey {
    PairKey { buyer: c.record.buyer_id.clone(), supplier: c.record.supplier_id.clone(), year: c.record.year() }
}

pub fn compute_pair_aggregates(records: &[LabeledContract]) -> HashMap<PairKey, PairAggregate> {
    let mut groups: HashMap<PairKey, (u32, f64, u32, BTreeSet<u32>)> = HashMap::new();
    for c in records {
        let g = groups.entry(pair_key(c)).or_default();
        g.0 += 1;
        g.1 += c.record.spending;
        if c.record.procedure_type == ProcedureType::SingleBidder {
            g.2 += 1;
        }
        g.3.insert(c.record.beginning_week);
    }
    groups
        .into_iter()
        .map(|(k, (n, spend, ad, weeks))| {
            let agg = PairAggregate {
                total_contracts: n,
                total_spending: spend,
                single_bidder_contracts: ad,
                active_weeks: weeks.len() as u32,
            };
            (k, agg)
        })
        .collect()
}

/// The two maxima are taken independently and may come from different suppliers.
pub fn compute_buyer_maxima(pairs: &HashMap<PairKey, PairAggregate>) -> HashMap<BuyerKey, BuyerAggregate> {
    let mut out: HashMap<BuyerKey, BuyerAggregate> = HashMap::new();
    for (key, pair) in pairs {
        out.entry(key.buyer_key())
            .and_modify(|b| {
                b.max_contracts = b.max_contracts.max(pair.total_contracts);
                b.max_spending = b.max_spending.max(pair.total_spending);
            })
            .or_insert(BuyerAggregate { max_contracts: pair.total_contracts, max_spending: pair.total_spending });
    }
    out
}

pub fn compute_risk_factors(
    key: &BuyerKey,
    pair: &PairAggregate,
    buyer: &BuyerAggregate,
) -> Result<RiskFactors, FeatureError> {
    if buyer.max_contracts == 0 || buyer.max_spending <= 0.0 {
        return Err(FeatureError::DegenerateBuyer { buyer: key.buyer.clone(), year: key.year });
    }
    let n = f64::from(pair.total_contracts);
    let weeks = f64::from(pair.active_weeks);
    Ok(RiskFactors {
        rad: f64::from(pair.single_bidder_contracts) / n,
        fav: FAV_COUNT_WEIGHT * (n / f64::from(buyer.max_contracts))
            + FAV_SPENDING_WEIGHT * (pair.total_spending / buyer.max_spending),
        cpw: n / weeks,
        spw: pair.total_spending / weeks,
    })
}

/// One feature row per contract, in input order, using the column order of
/// [`FeatureSchema::contract_features`].
pub fn assemble_features(
    records: &[LabeledContract],
    pairs: &HashMap<PairKey, PairAggregate>,
    buyers: &HashMap<BuyerKey, BuyerAggregate>,
) -> Result<Dataset, FeatureError> {
    let schema = FeatureSchema::contract_features();
    let rows: Vec<Vec<f64>> = records
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let key = pair_key(c);
            let bkey = key.buyer_key();
            let pair = pairs.get(&key).ok_or(FeatureError::MissingAggregate { index })?;
            let buyer = buyers.get(&bkey).ok_or(FeatureError::MissingAggregate { index })?;
            let risk = compute_risk_factors(&bkey, pair, buyer)?;
            let r = &c.record;
            let code = |i: usize| i as f64;
            Ok(vec![
                code(r.government_order as usize),
                code(r.procedure_character as usize),
                code(r.contract_type as usize),
                code(r.procedure_type as usize),
                code(r.supplier_size as usize),
                f64::from(r.beginning_week),
                f64::from(r.ending_week),
                f64::from(r.duration_weeks()),
                r.spending,
                f64::from(pair.total_contracts),
                pair.total_spending,
                f64::from(pair.single_bidder_contracts),
                f64::from(pair.active_weeks),
                f64::from(buyer.max_contracts),
                buyer.max_spending,
                risk.rad,
                risk.fav,
                risk.cpw,
                risk.spw,
            ])
        })
        .collect::<Result<_, FeatureError>>()?;
    let labels: Vec<Label> = records.iter().map(|c| c.label).collect();
    Ok(Dataset::from_rows(schema, &rows, &labels))
}

/// Aggregate and assemble in one step.
pub fn build_features(records: &[LabeledContract]) -> Result<Dataset, FeatureError> {
    let pairs = compute_pair_aggregates(records);
    let buyers = compute_buyer_maxima(&pairs);
    assemble_features(records, &pairs, &buyers)
}
