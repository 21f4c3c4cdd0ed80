/** Pretrained CLIP backend via transformers.js.
 *
 * Loaded lazily so the service runs without the optional dependency (and
 * without model weights) when the test backend is selected instead. The
 * first request may download weights into the transformers cache unless
 * they are already present.
 */

import { EmbeddingBackend, BadInputError, l2normalize } from "./embedding.js";

export const DEFAULT_CLIP_MODEL = "Xenova/clip-vit-base-patch32";

interface TransformersModule {
  AutoTokenizer: any;
  AutoProcessor: any;
  CLIPTextModelWithProjection: any;
  CLIPVisionModelWithProjection: any;
  RawImage: any;
}

export class ClipBackend implements EmbeddingBackend {
  readonly modelId: string;
  dim = 0;

  private tokenizer: any;
  private processor: any;
  private textModel: any;
  private visionModel: any;
  private rawImage: any;

  private constructor(modelId: string) {
    this.modelId = modelId;
  }

  static async load(modelId: string = DEFAULT_CLIP_MODEL): Promise<ClipBackend> {
    let transformers: TransformersModule;
    // computed specifier: the dependency is optional and resolved at runtime
    const moduleName = "@huggingface/transformers";
    try {
      transformers = (await import(moduleName)) as unknown as TransformersModule;
    } catch (err) {
      throw new Error(
        "the '@huggingface/transformers' package is not installed; " +
          "install it or start the service with --backend test",
      );
    }
    const backend = new ClipBackend(modelId);
    backend.tokenizer = await transformers.AutoTokenizer.from_pretrained(modelId);
    backend.processor = await transformers.AutoProcessor.from_pretrained(modelId);
    backend.textModel = await transformers.CLIPTextModelWithProjection.from_pretrained(modelId);
    backend.visionModel = await transformers.CLIPVisionModelWithProjection.from_pretrained(modelId);
    backend.rawImage = transformers.RawImage;
    const probe = await backend.embedText("dimension probe");
    backend.dim = probe.embedding.length;
    return backend;
  }

  async embedImage(png: Buffer): Promise<number[]> {
    let image;
    try {
      image = await this.rawImage.fromBlob(new Blob([new Uint8Array(png)], { type: "image/png" }));
    } catch {
      throw new BadInputError("image is not decodable");
    }
    const inputs = await this.processor(image);
    const { image_embeds } = await this.visionModel(inputs);
    return l2normalize(Array.from(image_embeds.data as Iterable<number>));
  }

  async embedText(text: string): Promise<{ embedding: number[]; truncated: boolean }> {
    const tokens = this.tokenizer([text], { padding: true, truncation: true });
    const length = Number(tokens.input_ids.dims?.[1] ?? 0);
    const untruncated = this.tokenizer([text], { padding: false, truncation: false });
    const fullLength = Number(untruncated.input_ids.dims?.[1] ?? length);
    const { text_embeds } = await this.textModel(tokens);
    return {
      embedding: l2normalize(Array.from(text_embeds.data as Iterable<number>)),
      truncated: fullLength > length,
    };
  }
}
