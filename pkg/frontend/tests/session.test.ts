import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { SessionController } from "../src/session.js";
import {
  CurvesPayload,
  Label,
  QueryPayload,
  SessionSummary,
  SubmitResult,
} from "../src/types.js";

/** Scripted stand-in for the HTTP client: a tiny two-bag session. */
class FakeClient extends ApiClient {
  queried: string[] = [];
  rejectNext: { status: number; code: string; message: string } | null = null;
  private pending = ["bagA", "bagB"];
  private curvePoints = 1;

  constructor() {
    super("http://fake");
  }

  private summaryNow(): SessionSummary {
    return {
      id: "s1",
      dataset: "demo",
      strategy: "agin",
      status: this.pending.length ? "awaiting-labels" : "finished",
      queried_bags: [...this.queried],
      queried: this.queried.length,
      remaining_queries: this.pending.length,
      pending_bag_id: this.pending[0] ?? null,
    };
  }

  override async createSession(): Promise<SessionSummary> {
    return this.summaryNow();
  }

  override async session(): Promise<SessionSummary> {
    return this.summaryNow();
  }

  override async nextQuery(): Promise<QueryPayload> {
    if (!this.pending.length) {
      throw new ApiError(409, "session-finished", "no positive bags are left to query");
    }
    return {
      bag_id: this.pending[0],
      instance_count: 2,
      features: [
        [0.1, 0.2],
        [0.5, 0.6],
      ],
      scores: [0.4, -0.2],
    };
  }

  override async submitLabels(
    _id: string,
    bagId: string,
    labels: Label[],
  ): Promise<SubmitResult> {
    if (this.rejectNext) {
      const { status, code, message } = this.rejectNext;
      this.rejectNext = null;
      throw new ApiError(status, code, message);
    }
    if (bagId !== this.pending[0]) {
      throw new ApiError(409, "out-of-order", `pending query is ${this.pending[0]}`);
    }
    if (labels.length !== 2) {
      throw new ApiError(400, "label-count", "expected 2 labels");
    }
    this.queried.push(this.pending.shift() as string);
    this.curvePoints += 1;
    return {
      status: this.pending.length ? "awaiting-labels" : "finished",
      queried: this.queried.length,
      remaining_queries: this.pending.length,
      curve_point: { f1_train: 0.5 },
      next_bag_id: this.pending[0] ?? null,
    };
  }

  override async curves(): Promise<CurvesPayload> {
    return {
      queries: this.curvePoints - 1,
      series: { f1_train: Array.from({ length: this.curvePoints }, (_, i) => i * 0.1) },
    };
  }
}

async function startedController(): Promise<[SessionController, FakeClient]> {
  const client = new FakeClient();
  const controller = new SessionController(client);
  await controller.start("demo", "agin");
  return [controller, client];
}

describe("SessionController", () => {
  it("starts a session and renders the first query", async () => {
    const [controller] = await startedController();
    expect(controller.state.phase).toBe("labeling");
    expect(controller.state.query?.bag_id).toBe("bagA");
    expect(controller.state.draft).toEqual([null, null]);
  });

  it("only allows submission once the draft is complete", async () => {
    const [controller] = await startedController();
    expect(controller.canSubmit()).toBe(false);
    controller.setLabel(0, 1);
    expect(controller.canSubmit()).toBe(false);
    controller.setLabel(1, -1);
    expect(controller.canSubmit()).toBe(true);
    controller.setLabel(1, null);
    expect(controller.canSubmit()).toBe(false);
  });

  it("ignores submit calls with an incomplete draft", async () => {
    const [controller, client] = await startedController();
    controller.setLabel(0, 1);
    await controller.submit();
    expect(client.queried).toEqual([]);
    expect(controller.state.phase).toBe("labeling");
  });

  it("advances to the next bag and extends the curve after a submission", async () => {
    const [controller] = await startedController();
    controller.setLabel(0, 1);
    controller.setLabel(1, -1);
    await controller.submit();
    expect(controller.state.query?.bag_id).toBe("bagB");
    expect(controller.state.draft).toEqual([null, null]);
    expect(controller.state.curves?.series.f1_train).toHaveLength(2);
  });

  it("finishes after the last bag", async () => {
    const [controller] = await startedController();
    for (const _bag of ["bagA", "bagB"]) {
      controller.setLabel(0, 1);
      controller.setLabel(1, -1);
      await controller.submit();
    }
    expect(controller.state.phase).toBe("finished");
    expect(controller.state.query).toBeNull();
    expect(controller.state.curves?.series.f1_train).toHaveLength(3);
  });

  it("keeps the draft when the server rejects an inconsistent labeling", async () => {
    const [controller, client] = await startedController();
    controller.setLabel(0, -1);
    controller.setLabel(1, -1);
    client.rejectNext = {
      status: 400,
      code: "assumption-violation",
      message: "a positive bag must contain at least one positive instance",
    };
    await controller.submit();
    expect(controller.state.phase).toBe("labeling");
    expect(controller.state.notice).toContain("positive instance");
    expect(controller.state.draft).toEqual([-1, -1]);
    expect(controller.state.query?.bag_id).toBe("bagA");
    // fixing the draft and resubmitting succeeds
    controller.setLabel(0, 1);
    await controller.submit();
    expect(client.queried).toEqual(["bagA"]);
  });

  it("refreshes state on conflict responses", async () => {
    const [controller, client] = await startedController();
    controller.setLabel(0, 1);
    controller.setLabel(1, -1);
    client.rejectNext = { status: 409, code: "already-queried", message: "bag was already labeled" };
    await controller.submit();
    expect(controller.state.phase).toBe("labeling");
    expect(controller.state.notice).toContain("already labeled");
    expect(controller.state.query?.bag_id).toBe("bagA");
  });

  it("resume rebuilds the view from the server alone", async () => {
    const client = new FakeClient();
    const controller = new SessionController(client);
    await controller.resume("s1");
    expect(controller.state.phase).toBe("labeling");
    expect(controller.state.query?.bag_id).toBe("bagA");
  });

  it("surfaces unexpected failures as a retryable error state", async () => {
    const client = new FakeClient();
    client.session = async () => {
      throw new ApiError(500, "boom", "internal failure");
    };
    const controller = new SessionController(client);
    await controller.resume("s1");
    expect(controller.state.phase).toBe("error");
    expect(controller.state.error).toContain("internal failure");
  });
});
