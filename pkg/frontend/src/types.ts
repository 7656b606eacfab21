/**
 * Wire types for the session service, vendored by hand and pinned by the
 * contract tests in test/contract.test.ts: every recorded server response
 * must satisfy the validators below, so drift between these declarations
 * and the server shows up as a test failure, not a runtime surprise.
 */

/** One waypoint row: x, y, z in meters plus scalar speed. */
export type WaypointRow = [number, number, number, number];

export interface TrajectoryDoc {
  frame: string;
  waypoints: WaypointRow[];
}

export interface SceneObjectDoc {
  label: string;
  center: [number, number, number];
  dimensions: [number, number, number];
  properties?: Record<string, string>;
}

export interface SceneDoc {
  objects: SceneObjectDoc[];
  description?: string | null;
}

export interface TurnErrorDoc {
  stage: string;
  code: string;
  message: string;
  details: Record<string, unknown>;
}

/** Constraint-stage report as it appears in a view bundle. */
export interface CsmViewDoc {
  status: string;
  linear_violation_max: number;
  true_violation_max: number;
  deviation_cost: number;
  smoothness_cost: number;
  solver_iterations: number;
}

/** Response of POST .../turns and GET .../turns/{k}/view. */
export interface TurnView {
  session_id: string;
  turn_index: number;
  instruction: string;
  context: "original" | "current";
  effective_instruction: string;
  initial: TrajectoryDoc;
  adapted: TrajectoryDoc;
  plan: string;
  params: Record<string, number>;
  trace: [number, string][];
  explanation: string | null;
  csm: CsmViewDoc | null;
  error: TurnErrorDoc | null;
  scene: SceneDoc;
}

/** The slice of a stored turn the transcript strip needs. */
export interface TurnSummary {
  index: number;
  instruction: string;
  context: string;
  error: TurnErrorDoc | null;
}

export interface TranscriptDoc {
  schema_version: number;
  id: string;
  status: string;
  turns: TurnSummary[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export class MalformedBundle extends Error {
  constructor(public readonly reason: string) {
    super(`malformed view bundle: ${reason}`);
  }
}

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function checkTrajectory(value: unknown, name: string): TrajectoryDoc {
  const t = value as TrajectoryDoc;
  if (t === null || typeof t !== "object" || !Array.isArray(t.waypoints)) {
    throw new MalformedBundle(`${name} is not a trajectory`);
  }
  for (let i = 0; i < t.waypoints.length; i++) {
    const row = t.waypoints[i];
    if (!Array.isArray(row) || row.length !== 4 || !row.every(isFiniteNumber)) {
      throw new MalformedBundle(`${name}.waypoints[${i}] is not [x, y, z, v]`);
    }
  }
  return t;
}

function checkScene(value: unknown): SceneDoc {
  const s = value as SceneDoc;
  if (s === null || typeof s !== "object" || !Array.isArray(s.objects)) {
    throw new MalformedBundle("scene is missing its object list");
  }
  for (const obj of s.objects) {
    if (typeof obj.label !== "string" ||
        !Array.isArray(obj.center) || obj.center.length !== 3 ||
        !Array.isArray(obj.dimensions) || obj.dimensions.length !== 3) {
      throw new MalformedBundle(`scene object ${JSON.stringify(obj)} is malformed`);
    }
  }
  return s;
}

/**
 * Validate a server payload as a TurnView. This checks structure only; the
 * client never recomputes or corrects trajectory data.
 */
export function asTurnView(data: unknown): TurnView {
  if (data === null || typeof data !== "object") {
    throw new MalformedBundle("payload is not an object");
  }
  const b = data as TurnView;
  if (typeof b.session_id !== "string") throw new MalformedBundle("session_id missing");
  if (!Number.isInteger(b.turn_index)) throw new MalformedBundle("turn_index missing");
  if (b.context !== "original" && b.context !== "current") {
    throw new MalformedBundle(`context ${JSON.stringify(b.context)} unknown`);
  }
  checkTrajectory(b.initial, "initial");
  checkTrajectory(b.adapted, "adapted");
  checkScene(b.scene);
  if (typeof b.plan !== "string") throw new MalformedBundle("plan missing");
  if (b.params === null || typeof b.params !== "object") {
    throw new MalformedBundle("params missing");
  }
  return b;
}

export function asTranscript(data: unknown): TranscriptDoc {
  const t = data as TranscriptDoc;
  if (t === null || typeof t !== "object" || !Array.isArray(t.turns)) {
    throw new MalformedBundle("transcript is missing its turn list");
  }
  return t;
}
