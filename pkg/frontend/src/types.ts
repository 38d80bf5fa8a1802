// Document shapes mirrored from the HTTP API. The explorer is a pure client:
// every number shown traces back to one of these fields.

export interface DesertGroupCount {
  urban: boolean;
  district: string;
  count: number;
}

export interface DesertCounts {
  total: number;
  by_group: DesertGroupCount[];
}

export interface SolutionBody {
  open: string[];
  new_sites: string[];
  assign: Record<string, string>;
  subsidy: number;
  group_distances: number[];
  p_grid_values: Record<string, number>;
  desert_counts?: DesertCounts;
}

export interface PortfolioEntry extends SolutionBody {
  label: string;
  index: { kind: string; p?: number | string; value?: string };
  lam?: number | null;
  value: number;
}

export interface PortfolioDocument {
  format: string;
  version: number;
  instance_key: string;
  delta: number;
  epsilon: number;
  certificate: Record<string, unknown>;
  oracle_calls?: number;
  baseline?: SolutionBody;
  entries: PortfolioEntry[];
  job_id?: string;
}

export interface SitePoint {
  id: string;
  lat: number;
  lon: number;
  pre_opened: boolean;
}

export interface DesertPoint {
  id: string;
  lat: number;
  lon: number;
  desert: boolean;
}

export interface SolutionGeo {
  type: string;
  entry: string;
  sites: SitePoint[];
  deserts?: DesertPoint[];
}

export type JobResponse =
  | { state: "running" }
  | { state: "failed"; error: string }
  | PortfolioDocument;
