import type { JobResponse, PortfolioDocument, SolutionGeo } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async json(url: string, init?: RequestInit): Promise<unknown> {
    const res = await this.fetchImpl(this.baseUrl + url, init);
    const body = await res.json();
    if (!res.ok && res.status !== 409) {
      const detail = (body as { detail?: string }).detail ?? res.statusText;
      throw new ApiError(res.status, detail);
    }
    return body;
  }

  async health(): Promise<boolean> {
    const body = (await this.json("/health")) as { ok?: boolean };
    return body.ok === true;
  }

  async uploadInstance(doc: unknown): Promise<string> {
    const body = (await this.json("/instances", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    })) as { instance_id: string };
    return body.instance_id;
  }

  async requestPortfolio(params: {
    instance_id: string;
    delta?: number;
    epsilon: number;
  }): Promise<string> {
    const body = (await this.json("/portfolios", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    })) as { job_id: string };
    return body.job_id;
  }

  async getPortfolio(jobId: string): Promise<JobResponse> {
    return (await this.json(`/portfolios/${jobId}`)) as JobResponse;
  }

  async getSolutionGeo(jobId: string, entry: number): Promise<SolutionGeo> {
    return (await this.json(
      `/solutions/${jobId}-${entry}/geojson-like`,
    )) as SolutionGeo;
  }
}

export function isDone(r: JobResponse): r is PortfolioDocument {
  return (r as PortfolioDocument).entries !== undefined;
}
