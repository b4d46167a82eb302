"""Bank-year panel ingestion, balancing and treatment assignment."""
import io
import math
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DuplicateKey, EmptyResult, InvalidParameter, MalformedRow, MissingColumn, YearAbsent
from .log import LogManager

PanelSource = Union[str, os.PathLike, BinaryIO, bytes]


@dataclass(frozen=True)
class PanelSchema:
    bank_id: str = 'bank_id'
    year: str = 'year'
    total_assets: str = 'total_assets'
    country: str = 'country'
    name: str = 'name'
    delimiter: str = ','

    @classmethod
    def from_mapping(cls, mapping: Optional[Dict[str, str]]) -> 'PanelSchema':
        if not mapping:
            return cls()
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameter("Unknown schema fields", fields=sorted(unknown))
        return cls(**mapping)

    def required(self) -> Tuple[str, str, str]:
        return self.bank_id, self.year, self.total_assets


@dataclass(frozen=True)
class BankRecord:
    bank_id: str
    year: int
    total_assets: float
    country: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.total_assets) or self.total_assets < 0:
            raise InvalidParameter("total_assets must be finite and non-negative",
                                   bank_id=self.bank_id, year=self.year, total_assets=self.total_assets)


@dataclass(frozen=True)
class BankPanel:
    records: Tuple[BankRecord, ...]
    years: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, 'records', records)
        object.__setattr__(self, 'years', tuple(sorted({r.year for r in records})))
        seen = set()
        for record in records:
            key = (record.bank_id, record.year)
            if key in seen:
                raise DuplicateKey("Repeated bank-year observation", bank_id=record.bank_id, year=record.year)
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def bank_ids(self) -> List[str]:
        ordered: Dict[str, None] = {}
        for record in self.records:
            ordered.setdefault(record.bank_id, None)
        return list(ordered)

    def year_records(self, year: int) -> List[BankRecord]:
        return [r for r in self.records if r.year == year]

    def assets(self, year: int) -> Tuple[List[str], np.ndarray]:
        records = self.year_records(year)
        if not records:
            raise YearAbsent("Year not present in panel", year=year, years=list(self.years))
        return [r.bank_id for r in records], np.array([r.total_assets for r in records], dtype=float)

    def subset(self, bank_ids: Iterable[str]) -> 'BankPanel':
        keep = set(bank_ids)
        return BankPanel(tuple(r for r in self.records if r.bank_id in keep))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'bank_id': [r.bank_id for r in self.records],
            'year': [r.year for r in self.records],
            'total_assets': [r.total_assets for r in self.records],
            'country': [r.country for r in self.records],
            'name': [r.name for r in self.records],
        })

    def to_csv(self, path_or_buffer) -> None:
        frame = self.to_frame()
        for column in ('country', 'name'):
            if frame[column].isna().all():
                frame = frame.drop(columns=column)
        frame.to_csv(path_or_buffer, index=False, float_format='%.17g', lineterminator='\n')


@dataclass(frozen=True)
class TreatmentAssignment:
    treated: Dict[str, bool]
    quantile: float
    base_year: int
    threshold: float

    def treated_ids(self) -> List[str]:
        return [bank for bank, flag in self.treated.items() if flag]

    def share(self) -> float:
        return sum(self.treated.values()) / len(self.treated) if self.treated else 0.0


def load_panel(source: PanelSource, schema: Optional[PanelSchema] = None) -> BankPanel:
    schema = schema or PanelSchema()
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    try:
        frame = pd.read_csv(source, sep=schema.delimiter, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise MissingColumn("Input has no header row", expected=list(schema.required()))
    missing = [column for column in schema.required() if column not in frame.columns]
    if missing:
        raise MissingColumn("Required columns missing from header", missing=missing, found=list(frame.columns))

    records: List[BankRecord] = []
    for position, values in enumerate(frame.to_dict(orient='records')):
        # header is line 1
        records.append(_parse_row(values, schema, position + 2))

    panel = BankPanel(tuple(records))
    LogManager.logger.debug(f"Panel loaded {repr({'records': len(panel), 'banks': len(panel.bank_ids()), 'years': list(panel.years)})}")
    return panel


def _parse_row(values: Dict[str, str], schema: PanelSchema, line: int) -> BankRecord:
    bank_id = values[schema.bank_id].strip()
    if not bank_id:
        raise MalformedRow("Empty bank identifier", row=line)
    raw_year = values[schema.year].strip()
    try:
        year = int(raw_year)
    except ValueError:
        raise MalformedRow("Unparseable year", row=line, value=raw_year)
    raw_assets = values[schema.total_assets].strip()
    if not raw_assets:
        raise MalformedRow("Missing total_assets", row=line, bank_id=bank_id)
    try:
        assets = float(raw_assets)
    except ValueError:
        raise MalformedRow("Unparseable total_assets", row=line, value=raw_assets)
    if not math.isfinite(assets) or assets < 0:
        raise MalformedRow("total_assets must be finite and non-negative", row=line, value=raw_assets)
    country = values.get(schema.country, '').strip() or None
    name = values.get(schema.name, '').strip() or None
    return BankRecord(bank_id, year, assets, country, name)


def balanced_panel(panel: BankPanel) -> BankPanel:
    if not len(panel):
        raise EmptyResult("Panel is empty")
    years_by_bank: Dict[str, set] = {}
    for record in panel.records:
        years_by_bank.setdefault(record.bank_id, set()).add(record.year)
    all_years = set(panel.years)
    keep = [bank for bank, years in years_by_bank.items() if years == all_years]
    if not keep:
        raise EmptyResult("No bank is observed in every year", years=list(panel.years))
    dropped = len(years_by_bank) - len(keep)
    if dropped:
        LogManager.logger.info(f"Balanced panel built {repr({'kept': len(keep), 'dropped': dropped})}")
    return panel.subset(keep)


def empirical_quantile(values: np.ndarray, quantile: float) -> float:
    # linear interpolation between order statistics ("type 7")
    return float(np.quantile(np.asarray(values, dtype=float), quantile, method='linear'))


def assign_treatment(panel: BankPanel, base_year: int, quantile: float) -> TreatmentAssignment:
    if not 0.0 < quantile < 1.0:
        raise InvalidParameter("quantile must lie in (0, 1)", quantile=quantile)
    if base_year not in panel.years:
        raise YearAbsent("Base year not present in panel", base_year=base_year, years=list(panel.years))
    bank_ids, assets = panel.assets(base_year)
    threshold = empirical_quantile(assets, quantile)
    treated = {bank: bool(value > threshold) for bank, value in zip(bank_ids, assets)}
    LogManager.logger.debug(f"Treatment assigned {repr({'base_year': base_year, 'quantile': quantile, 'threshold': threshold, 'treated': sum(treated.values()), 'banks': len(treated)})}")
    return TreatmentAssignment(treated, quantile, base_year, threshold)
