/** Minimal deterministic SVG line charts (no DOM, no runtime deps). */

export interface Series {
    label: string;
    color: string;
    points: Array<{ x: number; y: number }>;
}

export interface ChartOptions {
    title: string;
    xLabel: string;
    yLabel: string;
    logX?: boolean;
    logY?: boolean;
    width?: number;
    height?: number;
}

const METHOD_COLORS: Record<string, string> = {
    gbf: "#1f77b4",
    dcfusion: "#d62728",
    mcf: "#2ca02c",
    cmc: "#9467bd",
};
const FALLBACK_COLORS = ["#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"];

export function methodColor(method: string, index: number): string {
    return METHOD_COLORS[method] ?? FALLBACK_COLORS[index % FALLBACK_COLORS.length];
}

function niceTicks(lo: number, hi: number, count = 5): number[] {
    if (!(hi > lo)) {
        return [lo];
    }
    const span = hi - lo;
    const step = Math.pow(10, Math.floor(Math.log10(span / count)));
    const err = span / count / step;
    const factor = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
    const st = factor * step;
    const start = Math.ceil(lo / st) * st;
    const ticks: number[] = [];
    for (let v = start; v <= hi + 1e-12 * span; v += st) {
        ticks.push(Number(v.toPrecision(10)));
    }
    return ticks;
}

function logTicks(lo: number, hi: number): number[] {
    const ticks: number[] = [];
    for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
        const v = Math.pow(10, e);
        if (v >= lo / 1.0001 && v <= hi * 1.0001) {
            ticks.push(v);
        }
    }
    return ticks.length >= 2 ? ticks : [lo, hi];
}

function fmt(v: number): string {
    if (v === 0) return "0";
    const abs = Math.abs(v);
    if (abs >= 1e4 || abs < 1e-3) return v.toExponential(1);
    return Number(v.toPrecision(4)).toString();
}

function esc(text: string): string {
    return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderChart(series: Series[], options: ChartOptions): string {
    const width = options.width ?? 640;
    const height = options.height ?? 420;
    const margin = { top: 40, right: 20, bottom: 48, left: 64 };
    const plotW = width - margin.left - margin.right;
    const plotH = height - margin.top - margin.bottom;
    const pts = series.flatMap((s) => s.points);
    let xs = pts.map((p) => p.x);
    let ys = pts.map((p) => p.y);
    if (options.logX) xs = xs.filter((v) => v > 0);
    if (options.logY) ys = ys.filter((v) => v > 0);
    const xLo = Math.min(...xs);
    const xHi = Math.max(...xs);
    const yLo = Math.min(...ys);
    const yHi = Math.max(...ys);
    const xT = (v: number) => (options.logX ? Math.log10(v) : v);
    const yT = (v: number) => (options.logY ? Math.log10(v) : v);
    const padOr = (lo: number, hi: number) => (hi > lo ? 0 : Math.max(1e-6, Math.abs(lo) * 0.1 + 0.5));
    const xPad = padOr(xT(xLo), xT(xHi));
    const yPad = padOr(yT(yLo), yT(yHi));
    const sx = (v: number) =>
        margin.left +
        ((xT(v) - xT(xLo) + xPad) / (xT(xHi) - xT(xLo) + 2 * xPad || 1)) * plotW;
    const sy = (v: number) =>
        margin.top +
        plotH -
        ((yT(v) - yT(yLo) + yPad) / (yT(yHi) - yT(yLo) + 2 * yPad || 1)) * plotH;
    const xTicks = options.logX ? logTicks(xLo, xHi) : niceTicks(xLo, xHi);
    const yTicks = options.logY ? logTicks(yLo, yHi) : niceTicks(yLo, yHi);
    const parts: string[] = [];
    parts.push(
        `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="sans-serif">`,
    );
    parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
    parts.push(
        `<text x="${width / 2}" y="22" text-anchor="middle" font-size="15">${esc(options.title)}</text>`,
    );
    for (const t of xTicks.filter((v) => v >= xLo && v <= xHi)) {
        const x = sx(t);
        parts.push(
            `<line x1="${x.toFixed(2)}" y1="${margin.top}" x2="${x.toFixed(2)}" y2="${margin.top + plotH}" stroke="#dddddd"/>`,
            `<text x="${x.toFixed(2)}" y="${margin.top + plotH + 18}" text-anchor="middle" font-size="11">${fmt(t)}</text>`,
        );
    }
    for (const t of yTicks.filter((v) => v >= yLo && v <= yHi)) {
        const y = sy(t);
        parts.push(
            `<line x1="${margin.left}" y1="${y.toFixed(2)}" x2="${margin.left + plotW}" y2="${y.toFixed(2)}" stroke="#dddddd"/>`,
            `<text x="${margin.left - 8}" y="${(y + 4).toFixed(2)}" text-anchor="end" font-size="11">${fmt(t)}</text>`,
        );
    }
    parts.push(
        `<rect x="${margin.left}" y="${margin.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333333"/>`,
        `<text x="${margin.left + plotW / 2}" y="${height - 10}" text-anchor="middle" font-size="12">${esc(options.xLabel)}</text>`,
        `<text x="18" y="${margin.top + plotH / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 18 ${margin.top + plotH / 2})">${esc(options.yLabel)}</text>`,
    );
    series.forEach((s) => {
        const visible = s.points.filter(
            (p) => (!options.logX || p.x > 0) && (!options.logY || p.y > 0),
        );
        if (visible.length === 0) return;
        const path = visible
            .map((p, i) => `${i === 0 ? "M" : "L"}${sx(p.x).toFixed(2)},${sy(p.y).toFixed(2)}`)
            .join(" ");
        parts.push(`<path d="${path}" fill="none" stroke="${s.color}" stroke-width="1.8"/>`);
        for (const p of visible) {
            parts.push(
                `<circle cx="${sx(p.x).toFixed(2)}" cy="${sy(p.y).toFixed(2)}" r="3" fill="${s.color}"/>`,
            );
        }
    });
    series.forEach((s, i) => {
        const y = margin.top + 14 + 16 * i;
        const x = margin.left + plotW - 130;
        parts.push(
            `<line x1="${x}" y1="${y - 4}" x2="${x + 22}" y2="${y - 4}" stroke="${s.color}" stroke-width="2"/>`,
            `<text x="${x + 28}" y="${y}" font-size="11">${esc(s.label)}</text>`,
        );
    });
    parts.push("</svg>");
    return parts.join("\n") + "\n";
}
