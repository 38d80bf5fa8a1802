// Coordinate scatter of proposed vs existing sites and desert blockgroups.
// Rendered as self-contained SVG with a light graticule as the basemap.

import type { SolutionGeo } from "./types.js";

export interface MapModel {
  entry: string;
  newSiteCount: number; // the badge: |open \ pre_opened|
  preOpenedCount: number;
  desertCount: number;
  bounds: { latMin: number; latMax: number; lonMin: number; lonMax: number };
}

export function buildMapModel(geo: SolutionGeo): MapModel {
  const lats = geo.sites.map((s) => s.lat).concat((geo.deserts ?? []).map((d) => d.lat));
  const lons = geo.sites.map((s) => s.lon).concat((geo.deserts ?? []).map((d) => d.lon));
  const pad = 0.1;
  return {
    entry: geo.entry,
    newSiteCount: geo.sites.filter((s) => !s.pre_opened).length,
    preOpenedCount: geo.sites.filter((s) => s.pre_opened).length,
    desertCount: (geo.deserts ?? []).filter((d) => d.desert).length,
    bounds: {
      latMin: Math.min(...lats) - pad,
      latMax: Math.max(...lats) + pad,
      lonMin: Math.min(...lons) - pad,
      lonMax: Math.max(...lons) + pad,
    },
  };
}

export function renderMapSVG(geo: SolutionGeo, width = 640, height = 480): string {
  const model = buildMapModel(geo);
  const { latMin, latMax, lonMin, lonMax } = model.bounds;
  const x = (lon: number) => ((lon - lonMin) / (lonMax - lonMin)) * width;
  const y = (lat: number) => height - ((lat - latMin) / (latMax - latMin)) * height;

  const grid: string[] = [];
  for (let k = 1; k < 6; k++) {
    const gx = (k * width) / 6;
    const gy = (k * height) / 6;
    grid.push(`<line x1="${gx}" y1="0" x2="${gx}" y2="${height}" class="graticule"/>`);
    grid.push(`<line x1="0" y1="${gy}" x2="${width}" y2="${gy}" class="graticule"/>`);
  }
  const deserts = (geo.deserts ?? [])
    .map(
      (d) =>
        `<circle cx="${x(d.lon).toFixed(1)}" cy="${y(d.lat).toFixed(1)}" r="3" ` +
        `class="${d.desert ? "desert" : "blockgroup"}"><title>${d.id}</title></circle>`,
    )
    .join("");
  const sites = geo.sites
    .map((s) =>
      s.pre_opened
        ? `<rect x="${(x(s.lon) - 4).toFixed(1)}" y="${(y(s.lat) - 4).toFixed(1)}" ` +
          `width="8" height="8" class="site-existing"><title>${s.id}</title></rect>`
        : `<path d="M ${x(s.lon).toFixed(1)} ${(y(s.lat) - 6).toFixed(1)} l 5 9 l -10 0 z" ` +
          `class="site-new"><title>${s.id}</title></path>`,
    )
    .join("");
  const badge =
    `<g class="badge"><rect x="8" y="8" width="150" height="22" rx="4"/>` +
    `<text x="16" y="24">+${model.newSiteCount} new sites</text></g>`;
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" role="img" aria-label="sites for ${model.entry}">` +
    grid.join("") +
    deserts +
    sites +
    badge +
    `</svg>`
  );
}
