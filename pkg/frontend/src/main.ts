// Page wiring: upload, stage buttons, canvas layers, live diagnostics.

import { ApiClient } from "./api.js";
import { PointAnnotator } from "./annotate.js";
import { ViewTransform, gridToCanvas } from "./coords.js";
import { EventLog, subscribeEvents } from "./events.js";
import { ReportDoc, TrajectoryDoc, trajectoryAtEvent, trajectoryPolylines } from "./overlay.js";
import { sparklinePoints, toSvgPath } from "./sparkline.js";

type Layer = "image" | "labels" | "mask" | "trajectory";

const GRID_W = 64;
const GRID_H = 64;

const api = new ApiClient("");
const annotator = new PointAnnotator();
const log = new EventLog();

let sessionId: string | null = null;
let status = "none";
let zoom = 8;
let activeLayer: Layer = "image";
let layerImages: Partial<Record<Layer, HTMLImageElement>> = {};
let trajectory: TrajectoryDoc | null = null;
let report: ReportDoc | null = null;
let scrubIndex: number | null = null; // null = live end of the log

const $ = (id: string) => document.getElementById(id)!;
const canvas = () => $("canvas") as HTMLCanvasElement;

function vt(): ViewTransform {
	return { zoom, offsetX: 0, offsetY: 0 };
}

function setStatus(text: string): void {
	$("status").textContent = text;
}

function redraw(): void {
	const cv = canvas();
	cv.width = GRID_W * zoom;
	cv.height = GRID_H * zoom;
	const ctx = cv.getContext("2d")!;
	ctx.imageSmoothingEnabled = false;
	ctx.fillStyle = "#181818";
	ctx.fillRect(0, 0, cv.width, cv.height);

	const img = layerImages[activeLayer];
	if (img) ctx.drawImage(img, 0, 0, cv.width, cv.height);

	if (activeLayer === "trajectory" && trajectory) {
		const upto = scrubIndex ?? log.updates.length;
		const shown: TrajectoryDoc = {
			...trajectory,
			points: trajectoryAtEvent(trajectory, log.updates, upto),
		};
		ctx.lineWidth = 2;
		ctx.strokeStyle = "#ffd54a";
		for (const line of trajectoryPolylines(shown, vt())) {
			ctx.beginPath();
			line.forEach((p, i) => (i ? ctx.lineTo(p.x, p.y) : ctx.moveTo(p.x, p.y)));
			ctx.stroke();
		}
	}

	// annotation markers are always visible
	for (const pair of annotator.pairs) {
		drawMarker(ctx, pair.handle, "#ff5252");
		drawMarker(ctx, pair.target, "#4f9dff");
		const a = gridToCanvas(pair.handle, vt());
		const b = gridToCanvas(pair.target, vt());
		ctx.strokeStyle = "#ffffff88";
		ctx.lineWidth = 1;
		ctx.beginPath();
		ctx.moveTo(a.x, a.y);
		ctx.lineTo(b.x, b.y);
		ctx.stroke();
	}
	if (annotator.pending) drawMarker(canvas().getContext("2d")!, annotator.pending, "#ff5252");
}

function drawMarker(
	ctx: CanvasRenderingContext2D,
	g: { x: number; y: number },
	color: string,
): void {
	const p = gridToCanvas(g, vt());
	ctx.fillStyle = color;
	ctx.beginPath();
	ctx.arc(p.x, p.y, Math.max(3, zoom / 2), 0, 2 * Math.PI);
	ctx.fill();
}

function renderSparklines(): void {
	const losses = log.updates.map((e) => e.loss);
	const dists = log.updates.map((e) => e.distance);
	($("loss-spark") as unknown as SVGPathElement).setAttribute(
		"d",
		toSvgPath(sparklinePoints(losses, 220, 48)),
	);
	($("dist-spark") as unknown as SVGPathElement).setAttribute(
		"d",
		toSvgPath(sparklinePoints(dists, 220, 48)),
	);
	$("event-count").textContent = String(log.updates.length);
	$("reject-count").textContent = String(log.rejectedCount);
}

async function loadLayer(name: Layer, artifact: string): Promise<void> {
	if (!sessionId) return;
	const img = new Image();
	img.src = api.artifactUrl(sessionId, artifact) + `?v=${Date.now()}`;
	await img.decode();
	layerImages[name] = img;
}

async function onUpload(): Promise<void> {
	const latentInput = $("latent-file") as HTMLInputElement;
	const featureInput = $("feature-file") as HTMLInputElement;
	const latent = latentInput.files?.[0];
	if (!latent) {
		setStatus("choose a latent file first");
		return;
	}
	sessionId = await api.createSession(latent, featureInput.files?.[0]);
	status = "created";
	const img = new Image();
	img.src = api.viewUrl(sessionId, "features");
	await img.decode();
	layerImages["image"] = img;
	activeLayer = "image";
	setStatus(`session ${sessionId} created`);
	redraw();
}

async function onSegment(): Promise<void> {
	if (!sessionId) return;
	const n = Number(($("n-segments") as HTMLInputElement).value) || 9;
	const c = Number(($("compactness") as HTMLInputElement).value) || 0.5;
	const out = await api.segment(sessionId, { n_segments: n, compactness: c });
	status = out.status;
	await loadLayer("labels", "labels");
	activeLayer = "labels";
	setStatus(`segmented into ${out.n_patches} patches`);
	redraw();
}

async function onMask(): Promise<void> {
	if (!sessionId) return;
	const out = await api.mask(sessionId, annotator.toPayload());
	status = out.status;
	await loadLayer("mask", "mask");
	activeLayer = "mask";
	setStatus(`mask from patches [${out.source_labels.join(", ")}]`);
	redraw();
}

async function onDrag(): Promise<void> {
	if (!sessionId) return;
	await api.drag(sessionId, {
		instruction: {
			n_steps: Number(($("n-steps") as HTMLInputElement).value) || 16,
			max_updates: 300,
			learning_rate: 0.01,
			stop_radius: 1.0,
		},
		region_mode: ($("region-mode") as HTMLSelectElement).value,
	});
	status = "running";
	setStatus("dragging...");
	const terminal = await subscribeEvents("", sessionId, log, {
		onRecord: () => renderSparklines(),
	});
	status = terminal.event === "done" ? "done" : "failed";
	if (status === "done") {
		trajectory = await api.artifactJson<TrajectoryDoc>(sessionId, "trajectory");
		report = await api.artifactJson<ReportDoc>(sessionId, "report");
		activeLayer = "trajectory";
		const scrub = $("scrub") as HTMLInputElement;
		scrub.max = String(log.updates.length);
		scrub.value = scrub.max;
		scrubIndex = null;
		setStatus(
			`done: mean distance ${report.mean_distance.toFixed(2)} px, ` +
				`${report.updates_used} updates, converged=${report.converged}`,
		);
		redraw();
	} else {
		setStatus(`failed: ${terminal.error ?? "unknown"}`);
	}
}

function bind(): void {
	$("upload").addEventListener("click", () => void onUpload());
	$("segment").addEventListener("click", () => void onSegment());
	$("mask").addEventListener("click", () => void onMask());
	$("drag").addEventListener("click", () => void onDrag());
	$("undo").addEventListener("click", () => {
		annotator.undo();
		redraw();
	});
	$("scrub").addEventListener("input", () => {
		scrubIndex = Number(($("scrub") as HTMLInputElement).value);
		redraw();
	});
	$("zoom").addEventListener("change", () => {
		zoom = Number(($("zoom") as HTMLSelectElement).value);
		redraw();
	});
	for (const layer of ["image", "labels", "mask", "trajectory"] as Layer[]) {
		$(`layer-${layer}`).addEventListener("click", () => {
			activeLayer = layer;
			redraw();
		});
	}
	canvas().addEventListener("click", (ev) => {
		if (status === "none") return;
		const rect = canvas().getBoundingClientRect();
		const res = annotator.click(
			ev.clientX - rect.left,
			ev.clientY - rect.top,
			vt(),
			GRID_W,
			GRID_H,
		);
		if (!res.accepted) setStatus(res.hint ?? "ignored");
		redraw();
	});
	redraw();
}

document.addEventListener("DOMContentLoaded", bind);
